//! Acceptance suite, run without the libtest harness so its output is never captured. Every
//! criterion runs and prints one PASS/FAIL line; the process exits nonzero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{
    analytic_grads, eval_scale, fd_grads, grads_agree, linear_scan, off_grid_x, random_params,
    FD_STEP,
};
use pwlu_core::bench::{run_bench, DEFAULT_REPETITIONS};
use pwlu_core::config::{ActivationKind, RunConfig};
use pwlu_core::data::LabeledDataset;
use pwlu_core::kernel::{build_fused, forward_fused, forward_reference, Region};
use pwlu_core::nn::{
    init_pwlu_relu, ActivationSpec, Layer, LayerSpec, Model, ModelCheckpoint, ModelSpec, PwluSpec,
};
use pwlu_core::{run, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const EPS: f64 = f64::EPSILON;

type Check = Result<String, String>;

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(t)
    } else {
        Err(format!("took {t:.1?}, limit {limit:?}"))
    }
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut partials, mut worst_rel) = (0usize, 0.0f64);
    for cfg in 0..1000 {
        let p = random_params(&mut rng);
        let x = off_grid_x(&p, 0.05, &mut rng);
        let a = analytic_grads(&p, x);
        let fd = fd_grads(&p, x, FD_STEP);
        for (k, (&ga, &gf)) in a.iter().zip(&fd).enumerate() {
            if !grads_agree(ga, gf, 1e-4, 1e-7) {
                return Err(format!(
                    "config {cfg} slot {k}: analytic {ga} fd {gf} at x={x}"
                ));
            }
            if (ga - gf).abs() > 1e-7 {
                worst_rel = worst_rel.max((ga - gf).abs() / ga.abs().max(gf.abs()));
            }
            partials += 1;
        }
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!(
        "1000 configs, {partials} partials, worst rel {worst_rel:.2e}, {t:.2?}"
    ))
}

fn points_around(p: &pwlu_core::PwluParams, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w = p.right_boundary - p.left_boundary;
    (0..n)
        .map(|_| rng.random_range(p.left_boundary - w..p.right_boundary + w))
        .collect()
}

fn branch_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for cfg in 0..10 {
        let p = random_params(&mut rng);
        let xs = points_around(&p, 100_000, &mut rng);
        let y = forward_reference(&Tensor::from_vec(xs.clone()), &p).map_err(|e| e.to_string())?;
        for (&x, &v) in xs.iter().zip(y.data()) {
            let want = linear_scan(&p, x);
            let ulps = (v - want).abs() / (EPS * eval_scale(&p, x));
            if ulps > 4.0 {
                return Err(format!(
                    "config {cfg}: x={x} got {v} want {want} ({ulps:.2} eps)"
                ));
            }
            worst = worst.max(ulps);
        }
    }
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "10 configs x 1e5 points, worst {worst:.2} eps of scale, {t:.2?}"
    ))
}

fn fused_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for cfg in 0..10 {
        let p = random_params(&mut rng);
        let table = build_fused(&p).map_err(|e| e.to_string())?;
        let mut xs = points_around(&p, 100_000, &mut rng);
        xs.extend((0..=p.n_intervals).map(|j| p.grid_point(j)));
        xs.extend([
            p.left_boundary,
            p.right_boundary,
            p.left_boundary.next_down(),
            p.right_boundary.next_down(),
        ]);
        let r = forward_reference(&Tensor::from_vec(xs.clone()), &p).map_err(|e| e.to_string())?;
        let f = forward_fused(&Tensor::from_vec(xs.clone()), &table);
        for ((&x, &a), &b) in xs.iter().zip(r.data()).zip(f.data()) {
            let ulps = (a - b).abs() / (EPS * eval_scale(&p, x));
            if ulps > 8.0 {
                return Err(format!(
                    "config {cfg}: x={x} reference {a} fused {b} ({ulps:.2} eps)"
                ));
            }
            worst = worst.max(ulps);
        }
        // B_L opens interval 0 and anything below it is on the left branch, in both forms
        let bl = p.left_boundary;
        if p.region(bl) != Region::Interior(0) || table.extended_index(bl) != 0 {
            return Err(format!("config {cfg}: B_L not on interval 0"));
        }
        if p.region(bl.next_down()) != Region::Left || table.extended_index(bl.next_down()) != -1 {
            return Err(format!(
                "config {cfg}: point below B_L not on the left branch"
            ));
        }
        if p.region(p.right_boundary) != Region::Right {
            return Err(format!("config {cfg}: B_R not on the right branch"));
        }
    }
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "10 configs x 1e5 points plus boundaries and grid, worst {worst:.2} eps of scale, {t:.2?}"
    ))
}

fn relu_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = init_pwlu_relu(16, 3.0).map_err(|e| e.to_string())?;
    let table = build_fused(&p).map_err(|e| e.to_string())?;
    let mut xs: Vec<f64> = Vec::with_capacity(10_000);
    xs.extend((0..4000).map(|_| rng.random_range(-6.0..6.0)));
    xs.extend((0..3000).map(|_| rng.random_range(-1e6..1e6)));
    // log-uniform magnitudes below 2^52 with random sign
    xs.extend((0..3000).map(|_| {
        let m = 2f64.powf(rng.random_range(-40.0..51.0)) * rng.random_range(1.0..2.0f64);
        if rng.random() {
            m
        } else {
            -m
        }
    }));
    let y = forward_reference(&Tensor::from_vec(xs.clone()), &p).map_err(|e| e.to_string())?;
    for (&x, &v) in xs.iter().zip(y.data()) {
        let want = x.max(0.0);
        if v.to_bits() != want.to_bits() || table.eval(x).to_bits() != want.to_bits() {
            return Err(format!(
                "x={x}: reference {v} fused {} relu {want}",
                table.eval(x)
            ));
        }
    }
    Ok(format!(
        "{} doubles bitwise equal to max(x, 0) in both kernels",
        xs.len()
    ))
}

/// Network `16 -> dense(identity, bias 5) -> pwlu -> dense -> 2` fed N(0,1) inputs, so the PWLU
/// layer sees N(5,1) per unit.
fn realignment_contract() -> Check {
    let start = Instant::now();
    let act = ActivationSpec::Pwlu(PwluSpec::default());
    let spec = ModelSpec {
        input_shape: vec![16],
        layers: vec![
            LayerSpec::Dense { out: 16 },
            LayerSpec::Activation(act),
            LayerSpec::Dense { out: 2 },
        ],
    };
    let mut model = Model::new(spec, 5).map_err(|e| e.to_string())?;
    if let Layer::Dense(d) = &mut model.layers[0] {
        d.weight
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = if i % 17 == 0 { 1.0 } else { 0.0 });
        d.bias.iter_mut().for_each(|b| *b = 5.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1280;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let features: Vec<f64> = (0..n * 16).map(|_| normal.sample(&mut rng)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let data = LabeledDataset::new(Tensor::new(vec![n, 16], features).unwrap(), labels, 2)
        .map_err(|e| e.to_string())?;
    let name = model.layer_name(1);
    let Layer::Pwlu(layer) = &mut model.layers[1] else {
        unreachable!()
    };
    layer.frozen = true;
    layer.collecting = true;
    let rows: Vec<usize> = (0..n).collect();
    for batch in rows.chunks(64).cycle().take(200) {
        model
            .forward(&data.batch(batch).0, true)
            .map_err(|e| e.to_string())?;
    }
    let Layer::Pwlu(layer) = &mut model.layers[1] else {
        unreachable!()
    };
    let pre = pwlu_core::AlignmentReport {
        rows: layer.reservoir_alignment(&name),
    };
    layer.realign().map_err(|e| e.to_string())?;
    let post = pwlu_core::AlignmentReport {
        rows: layer.reservoir_alignment(&name),
    };
    if pre.rows.len() != 16 || post.rows.len() != 16 {
        return Err(format!(
            "expected 16 units, got {} / {}",
            pre.rows.len(),
            post.rows.len()
        ));
    }
    for (a, b) in pre.rows.iter().zip(&post.rows) {
        let (lo, hi) = (b.boundary.lo, b.boundary.hi);
        if (lo - 2.0).abs() > 0.2 || (hi - 8.0).abs() > 0.2 {
            return Err(format!(
                "unit {}: boundaries [{lo:.3}, {hi:.3}]",
                b.unit_index
            ));
        }
        if a.iou >= 0.2 || b.iou < 0.5 {
            return Err(format!(
                "unit {}: IOU {:.3} -> {:.3}",
                b.unit_index, a.iou, b.iou
            ));
        }
    }
    let t = within(Duration::from_secs(120), start)?;
    let (lo, hi) = (post.rows[0].boundary.lo, post.rows[0].boundary.hi);
    Ok(format!(
        "16 units, mean IOU {:.3} -> {:.3}, unit 0 boundaries [{lo:.3}, {hi:.3}], {t:.2?}",
        pre.mean_iou().unwrap_or(f64::NAN),
        post.mean_iou().unwrap_or(f64::NAN)
    ))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn training_benefit() -> Check {
    let start = Instant::now();
    let base = RunConfig::default();
    let methods = [
        (
            "relu",
            RunConfig {
                activation: ActivationKind::Relu,
                ..base.clone()
            },
        ),
        (
            "fix-init",
            RunConfig {
                realign: false,
                ..base.clone()
            },
        ),
        ("realign", base.clone()),
    ];
    let results: Vec<Result<Vec<f64>, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = methods
            .iter()
            .map(|(_, cfg)| {
                s.spawn(move || {
                    (0..5u64)
                        .map(|seed| {
                            let out = run::train(&RunConfig {
                                seed,
                                ..cfg.clone()
                            })
                            .map_err(|e| e.to_string())?;
                            out.final_test_accuracy()
                                .ok_or_else(|| "no epochs".to_string())
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut stats = Vec::new();
    for ((name, _), r) in methods.iter().zip(results) {
        stats.push((*name, mean_std(&r?)));
    }
    let [(_, (relu, relu_sd)), (_, (fix, _)), (_, (realign, realign_sd))] = stats[..] else {
        unreachable!()
    };
    let seed_sd = relu_sd.max(realign_sd);
    let summary = stats
        .iter()
        .map(|(n, (m, sd))| format!("{n} {:.2}% (sd {:.2})", 100.0 * m, 100.0 * sd))
        .collect::<Vec<_>>()
        .join(", ");
    let t = within(Duration::from_secs(600), start)?;
    if realign >= fix && fix >= relu - 0.005 && realign - relu >= seed_sd {
        Ok(format!("{summary}, {t:.1?}"))
    } else {
        Err(summary)
    }
}

fn n_sweep() -> Check {
    let start = Instant::now();
    let n_list = [4, 8, 12, 16, 20];
    let report = run::sweep(&RunConfig::default(), &n_list, None).map_err(|e| e.to_string())?;
    if report
        .rows
        .iter()
        .map(|r| r.n_intervals)
        .collect::<Vec<_>>()
        != n_list
    {
        return Err("one row per interval count expected".into());
    }
    for r in &report.rows {
        match &r.result {
            Ok((acc, loss)) if acc.is_finite() && loss.is_finite() => {}
            Ok(v) => return Err(format!("N={}: {v:?}", r.n_intervals)),
            Err(e) => return Err(format!("N={}: {e}", r.n_intervals)),
        }
    }
    let t = within(Duration::from_secs(1800), start)?;
    let accs: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{}:{:.1}%",
                r.n_intervals,
                100.0 * r.result.as_ref().unwrap().0
            )
        })
        .collect();
    Ok(format!("{}, {t:.1?}", accs.join(" ")))
}

fn determinism() -> Check {
    let cfg = RunConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = run::train(&cfg).map_err(|e| e.to_string())?;
        run::write_outputs(&cfg, &out, &dir.path().join(name)).map_err(|e| e.to_string())?;
        csvs.push(
            std::fs::read(dir.path().join(name).join("metrics.csv")).map_err(|e| e.to_string())?,
        );
    }
    if csvs[0] != csvs[1] {
        return Err("metrics CSV differs between identical runs".into());
    }

    // resume from a serialized checkpoint before every single step
    let (split, mut straight) = run::prepare(&cfg).map_err(|e| e.to_string())?;
    let (_, mut resumed) = run::prepare(&cfg).map_err(|e| e.to_string())?;
    let total = straight.schedule.total_iterations;
    while !straight.is_finished() {
        let t = straight.iteration();
        let bytes = ModelCheckpoint::from_trainer(&resumed).to_bytes();
        resumed = ModelCheckpoint::from_bytes(&bytes)
            .and_then(|c| c.into_trainer())
            .map_err(|e| e.to_string())?;
        let a = straight.step(&split.train).map_err(|e| e.to_string())?;
        let b = resumed.step(&split.train).map_err(|e| e.to_string())?;
        if a.loss.to_bits() != b.loss.to_bits() {
            return Err(format!("loss diverged at step {t}"));
        }
    }
    if ModelCheckpoint::from_trainer(&straight).to_bytes()
        != ModelCheckpoint::from_trainer(&resumed).to_bytes()
    {
        return Err("final checkpoints differ".into());
    }
    Ok(format!(
        "metrics CSV byte-identical, resume at each of {total} steps bitwise identical"
    ))
}

fn inference_ordering() -> Check {
    let p = init_pwlu_relu(16, 3.0).map_err(|e| e.to_string())?;
    let report = run_bench(&p, 1_000_000, DEFAULT_REPETITIONS, 9).map_err(|e| e.to_string())?;
    let fused = report.row("pwlu_fused").ok_or("missing fused row")?;
    let reference = report
        .row("pwlu_reference")
        .ok_or("missing reference row")?;
    let line = format!(
        "1e6 elements x {} reps: fused {:.3} ms, reference {:.3} ms",
        fused.repetitions, fused.mean_ms, reference.mean_ms
    );
    if fused.mean_ms <= reference.mean_ms {
        Ok(line)
    } else {
        Err(line)
    }
}

fn main() -> std::process::ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("gradient oracle", gradient_oracle),
        ("branch oracle equivalence", branch_oracle),
        ("fused path equivalence", fused_equivalence),
        ("relu exactness at initialization", relu_exactness),
        ("realignment contract", realignment_contract),
        ("two-phase training benefit", training_benefit),
        ("interval-count sweep", n_sweep),
        ("determinism and resume", determinism),
        ("inference ordering", inference_ordering),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.into_iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", k + 1),
            Err(detail) => {
                println!("FAIL criterion {}: {name}: {detail}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("all 9 criteria passed");
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
