use pwlu_core::config::{ActivationKind, RunConfig};
use pwlu_core::nn::loss::softmax_xent;
use pwlu_core::nn::{
    metrics_csv, train_from, ActivationSpec, Granularity, Layer, Model, ModelCheckpoint, ModelSpec,
    PwluSpec,
};
use pwlu_core::{run, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> RunConfig {
    RunConfig {
        spirals_train: 60,
        spirals_test: 40,
        epochs: 6,
        t_prime_epochs: 2,
        batch_size: 16,
        seed: 3,
        ..Default::default()
    }
}

fn loss_of(model: &mut Model, x: &Tensor, labels: &[usize]) -> f64 {
    let logits = model.forward(x, false).unwrap();
    softmax_xent(&logits, labels).unwrap().loss
}

/// Trainable scalars per layer; PWLU units use the packed `[B_L, B_R, K_L, K_R, Y..]` layout.
fn packed(model: &Model) -> Vec<Vec<f64>> {
    model
        .layers
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => d.weight.iter().chain(&d.bias).copied().collect(),
            Layer::Pwlu(p) => {
                let mut v = Vec::new();
                for u in &p.units {
                    u.write_trainable(&mut v);
                }
                v
            }
            _ => Vec::new(),
        })
        .collect()
}

fn unpack(model: &mut Model, values: &[Vec<f64>]) {
    for (l, v) in model.layers.iter_mut().zip(values) {
        match l {
            Layer::Dense(d) => {
                let nw = d.weight.len();
                d.weight.copy_from_slice(&v[..nw]);
                d.bias.copy_from_slice(&v[nw..]);
            }
            Layer::Pwlu(p) => {
                let per = p.units[0].trainable_len();
                for (u, chunk) in p.units.iter_mut().zip(v.chunks(per)) {
                    u.read_trainable(chunk).unwrap();
                }
            }
            _ => {}
        }
    }
}

fn grads(model: &Model) -> Vec<Vec<f64>> {
    model
        .layers
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => d.grad_weight.iter().chain(&d.grad_bias).copied().collect(),
            Layer::Pwlu(p) => {
                let mut v = Vec::new();
                for g in &p.grads {
                    g.write_packed(&mut v);
                }
                v
            }
            _ => Vec::new(),
        })
        .collect()
}

#[test]
fn network_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for granularity in [Granularity::Channel, Granularity::Layer] {
        let act = ActivationSpec::Pwlu(PwluSpec {
            n_intervals: 8,
            granularity,
            half_width: 2.0,
        });
        let mut model = Model::new(ModelSpec::mlp(2, &[16, 16], 2, act), 5).unwrap();
        // move every unit away from its ReLU shape so all partials are exercised
        for (_, p) in model.pwlu_layers_mut() {
            for u in &mut p.units {
                for y in &mut u.y_points {
                    *y += rng.random_range(-0.5..0.5);
                }
                u.left_slope = rng.random_range(-0.5..0.5);
                u.right_slope = rng.random_range(0.5..1.5);
                u.left_boundary += rng.random_range(-0.3..0.3);
            }
        }
        let x = Tensor::new(
            vec![8, 2],
            (0..16).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        model.loss_and_grads(&x, &labels).unwrap();
        let analytic = grads(&model);
        let base = packed(&model);
        let h = 1e-6;
        let (mut checked, mut worst) = (0, 0.0f64);
        for li in 0..base.len() {
            for k in 0..base[li].len() {
                let mut v = base.clone();
                v[li][k] += h;
                unpack(&mut model, &v);
                let lp = loss_of(&mut model, &x, &labels);
                v[li][k] = base[li][k] - h;
                unpack(&mut model, &v);
                let lm = loss_of(&mut model, &x, &labels);
                let fd = (lp - lm) / (2.0 * h);
                let a = analytic[li][k];
                let err = (a - fd).abs();
                assert!(
                    err <= 1e-3 * a.abs().max(fd.abs()) || err <= 1e-8,
                    "{granularity:?} layer {li} slot {k}: analytic {a} fd {fd}"
                );
                worst = worst.max(err);
                checked += 1;
            }
        }
        unpack(&mut model, &base);
        assert!(checked >= 380, "{checked}");
        assert!(worst < 1e-5, "{worst}");
    }
}

#[test]
fn same_seed_gives_identical_metrics() {
    let cfg = small_config();
    let a = run::train(&cfg).unwrap();
    let b = run::train(&cfg).unwrap();
    assert_eq!(metrics_csv(&a.epochs), metrics_csv(&b.epochs));
    assert_eq!(
        ModelCheckpoint::from_trainer(&a.trainer).to_bytes(),
        ModelCheckpoint::from_trainer(&b.trainer).to_bytes()
    );
    let c = run::train(&RunConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(metrics_csv(&a.epochs), metrics_csv(&c.epochs));
}

#[test]
fn checkpoint_bytes_round_trip() {
    let cfg = small_config();
    let (split, mut trainer) = run::prepare(&cfg).unwrap();
    let t_prime = trainer.schedule.realign_iteration;
    for _ in 0..t_prime + 3 {
        trainer.step(&split.train).unwrap();
    }
    let bytes = ModelCheckpoint::from_trainer(&trainer).to_bytes();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    ModelCheckpoint::from_bytes(&bytes)
        .unwrap()
        .save(&path)
        .unwrap();
    let restored = ModelCheckpoint::load(&path)
        .unwrap()
        .into_trainer()
        .unwrap();
    assert_eq!(ModelCheckpoint::from_trainer(&restored).to_bytes(), bytes);
    assert!(restored.reports.pre_reset.is_some());
    assert_eq!(restored.iteration(), t_prime + 3);
}

#[test]
fn resume_matches_straight_through_run() {
    let cfg = small_config();
    let (split, mut straight) = run::prepare(&cfg).unwrap();
    let total = straight.schedule.total_iterations;
    let t_prime = straight.schedule.realign_iteration;
    let mut losses = Vec::new();
    while !straight.is_finished() {
        losses.push(straight.step(&split.train).unwrap().loss.to_bits());
    }
    let want = ModelCheckpoint::from_trainer(&straight).to_bytes();

    for stop in [
        0,
        1,
        t_prime - 1,
        t_prime,
        t_prime + 1,
        total / 2 + 3,
        total - 1,
    ] {
        let (_, mut first) = run::prepare(&cfg).unwrap();
        for _ in 0..stop {
            first.step(&split.train).unwrap();
        }
        let bytes = ModelCheckpoint::from_trainer(&first).to_bytes();
        let mut resumed = ModelCheckpoint::from_bytes(&bytes)
            .unwrap()
            .into_trainer()
            .unwrap();
        let mut t = stop;
        while !resumed.is_finished() {
            assert_eq!(
                resumed.step(&split.train).unwrap().loss.to_bits(),
                losses[t],
                "stop {stop}, step {t}"
            );
            t += 1;
        }
        assert_eq!(
            ModelCheckpoint::from_trainer(&resumed).to_bytes(),
            want,
            "stop {stop}"
        );
    }
}

#[test]
fn resumed_run_finishes_with_same_metrics_tail() {
    let cfg = small_config();
    let (split, trainer) = run::prepare(&cfg).unwrap();
    let full = train_from(trainer, &split.train, &split.test).unwrap();

    let (split, mut trainer) = run::prepare(&cfg).unwrap();
    let per_epoch = trainer.iterations_per_epoch();
    for _ in 0..3 * per_epoch {
        trainer.step(&split.train).unwrap();
    }
    let bytes = ModelCheckpoint::from_trainer(&trainer).to_bytes();
    let resumed = ModelCheckpoint::from_bytes(&bytes)
        .unwrap()
        .into_trainer()
        .unwrap();
    let tail = train_from(resumed, &split.train, &split.test).unwrap();
    assert_eq!(metrics_csv(&tail.epochs), metrics_csv(&full.epochs[3..]));
}

#[test]
fn realignment_produces_reports_and_unfreezes() {
    let out = run::train(&small_config()).unwrap();
    let pre = out.reports().pre_reset.as_ref().unwrap();
    let post = out.reports().post_reset.as_ref().unwrap();
    assert_eq!(pre.rows.len(), 64);
    assert_eq!(post.rows.len(), 64);
    for (a, b) in pre.rows.iter().zip(&post.rows) {
        assert_eq!(a.input, b.input);
    }
    for (_, p) in out.model().pwlu_layers() {
        assert!(!p.frozen && !p.collecting);
    }
    assert!(out.epochs.iter().all(|e| e.train_loss.is_finite()));
}

#[test]
fn fix_init_trains_from_first_step() {
    let cfg = RunConfig {
        realign: false,
        ..small_config()
    };
    let (split, mut trainer) = run::prepare(&cfg).unwrap();
    let before: Vec<_> = trainer
        .model
        .pwlu_layers()
        .map(|(_, p)| p.units.clone())
        .collect();
    trainer.step(&split.train).unwrap();
    let after: Vec<_> = trainer
        .model
        .pwlu_layers()
        .map(|(_, p)| p.units.clone())
        .collect();
    assert_ne!(before, after);
    assert!(trainer.reports.pre_reset.is_none());
}

#[test]
fn frozen_phase_keeps_relu_shape() {
    let cfg = small_config();
    let (split, mut trainer) = run::prepare(&cfg).unwrap();
    let before: Vec<_> = trainer
        .model
        .pwlu_layers()
        .map(|(_, p)| p.units.clone())
        .collect();
    for _ in 0..trainer.schedule.realign_iteration {
        trainer.step(&split.train).unwrap();
    }
    let after: Vec<_> = trainer
        .model
        .pwlu_layers()
        .map(|(_, p)| p.units.clone())
        .collect();
    assert_eq!(before, after);
    for (_, p) in trainer.model.pwlu_layers() {
        assert!(p
            .stats
            .iter()
            .all(|s| s.update_count as usize == trainer.schedule.realign_iteration));
    }
}

#[test]
fn relu_and_swish_models_train() {
    for activation in [ActivationKind::Relu, ActivationKind::Swish] {
        let out = run::train(&RunConfig {
            activation,
            ..small_config()
        })
        .unwrap();
        assert!(out.final_report.rows.is_empty());
        assert!(out.reports().pre_reset.is_none());
        assert_eq!(out.epochs.len(), 6);
    }
}
