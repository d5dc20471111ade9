//! Python bindings for the PWLU kernel, realignment statistics and the spirals generator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pwlu_core::kernel::{backward, build_fused, forward_reference};
use pwlu_core::nn::init_pwlu_relu;
use pwlu_core::stats::{self, Interval};
use pwlu_core::{data, Tensor};

fn to_py(e: pwlu_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "PwluParams", module = "pwlu", from_py_object)]
#[derive(Clone)]
pub struct PyPwluParams {
    inner: pwlu_core::PwluParams,
}

#[pymethods]
impl PyPwluParams {
    #[new]
    fn new(
        left_boundary: f64,
        right_boundary: f64,
        y_points: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
    ) -> PyResult<Self> {
        let n = y_points.len().saturating_sub(1);
        pwlu_core::PwluParams::new(n, left_boundary, right_boundary, y_points, left_slope, right_slope)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// ReLU sampled on `n_intervals` intervals over `[-half_width, half_width]`.
    #[staticmethod]
    fn init_relu(n_intervals: usize, half_width: f64) -> PyResult<Self> {
        init_pwlu_relu(n_intervals, half_width)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn n_intervals(&self) -> usize {
        self.inner.n_intervals
    }

    #[getter]
    fn left_boundary(&self) -> f64 {
        self.inner.left_boundary
    }

    #[getter]
    fn right_boundary(&self) -> f64 {
        self.inner.right_boundary
    }

    #[getter]
    fn y_points(&self) -> Vec<f64> {
        self.inner.y_points.clone()
    }

    #[getter]
    fn left_slope(&self) -> f64 {
        self.inner.left_slope
    }

    #[getter]
    fn right_slope(&self) -> f64 {
        self.inner.right_slope
    }

    fn forward(&self, xs: Vec<f64>) -> PyResult<Vec<f64>> {
        forward_reference(&Tensor::from_vec(xs), &self.inner)
            .map(Tensor::into_data)
            .map_err(to_py)
    }

    /// Returns a dict with `input`, `left_boundary`, `right_boundary`, `left_slope`,
    /// `right_slope` and `y_points` gradients.
    fn backward<'py>(&self, py: Python<'py>, xs: Vec<f64>, upstream: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let g = backward(&Tensor::from_vec(xs), &Tensor::from_vec(upstream), &self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("input", g.input_grad.into_data())?;
        d.set_item("left_boundary", g.params.left_boundary)?;
        d.set_item("right_boundary", g.params.right_boundary)?;
        d.set_item("left_slope", g.params.left_slope)?;
        d.set_item("right_slope", g.params.right_slope)?;
        d.set_item("y_points", g.params.y_points)?;
        Ok(d)
    }

    fn fused(&self) -> PyResult<PyFusedTable> {
        build_fused(&self.inner)
            .map(|inner| PyFusedTable { inner })
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "PwluParams(n_intervals={}, left_boundary={}, right_boundary={})",
            self.inner.n_intervals, self.inner.left_boundary, self.inner.right_boundary
        )
    }
}

#[pyclass(name = "FusedTable", module = "pwlu")]
pub struct PyFusedTable {
    inner: pwlu_core::FusedPwluTable,
}

#[pymethods]
impl PyFusedTable {
    /// Slopes indexed by the extended interval index plus one.
    #[getter]
    fn slopes(&self) -> Vec<f64> {
        self.inner.slopes.clone()
    }

    #[getter]
    fn offsets(&self) -> Vec<f64> {
        self.inner.offsets.clone()
    }

    fn forward(&self, xs: Vec<f64>) -> Vec<f64> {
        let mut out = vec![0.0; xs.len()];
        self.inner.eval_into(&xs, &mut out);
        out
    }
}

#[pyclass(name = "RunningStats", module = "pwlu", from_py_object)]
#[derive(Clone, Default)]
pub struct PyRunningStats {
    inner: pwlu_core::RunningStats,
}

#[pymethods]
impl PyRunningStats {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    fn update(&mut self, batch: Vec<f64>) -> PyResult<()> {
        self.inner.update(&batch).map_err(to_py)
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean
    }

    #[getter]
    fn std(&self) -> f64 {
        self.inner.std
    }

    #[getter]
    fn update_count(&self) -> u64 {
        self.inner.update_count
    }
}

/// Resets boundaries to `mean +/- 3 std` with a ReLU shape on the new grid.
#[pyfunction]
fn realign_reset(params: &PyPwluParams, stats: &PyRunningStats) -> PyResult<PyPwluParams> {
    stats::realign_reset(&params.inner, &stats.inner)
        .map(|inner| PyPwluParams { inner })
        .map_err(to_py)
}

#[pyfunction]
fn compute_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    stats::compute_iou(Interval::new(a.0, a.1), Interval::new(b.0, b.1))
}

/// Nearest-rank `(p5, p95)`.
#[pyfunction]
fn percentile_interval(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    stats::percentile_interval(&samples)
        .map(|iv| (iv.lo, iv.hi))
        .map_err(to_py)
}

/// `(points, labels)` with points as `[x, y]` pairs.
#[pyfunction]
#[pyo3(signature = (n_per_class, noise, seed, turns = data::spirals::DEFAULT_TURNS))]
fn gen_spirals(n_per_class: usize, noise: f64, seed: u64, turns: f64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let d = data::spirals::gen_spirals_with_turns(n_per_class, noise, turns, seed);
    let points = d.features.data().chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    (points, d.labels)
}

#[pymodule]
fn pwlu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPwluParams>()?;
    m.add_class::<PyFusedTable>()?;
    m.add_class::<PyRunningStats>()?;
    m.add_function(wrap_pyfunction!(realign_reset, m)?)?;
    m.add_function(wrap_pyfunction!(compute_iou, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_interval, m)?)?;
    m.add_function(wrap_pyfunction!(gen_spirals, m)?)?;
    Ok(())
}
