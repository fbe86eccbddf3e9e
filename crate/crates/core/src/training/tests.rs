use super::*;
use crate::data::{augment, split, synth_generate, EpochKind, PairSet, Split, SNR_RANGE};
use crate::error::Error;
use crate::metrics::rms;
use crate::model::{init_params, ModelConfig, ModelKind, ModelParams};
use crate::numerics::{Rng, Tensor};

fn scalar_params(theta: f64, g: f64) -> ModelParams<f64> {
    let mut p = ModelParams::new();
    p.insert("theta", Tensor::new(vec![1], vec![theta]).unwrap());
    p.get_mut("theta").unwrap().accumulate_grad(&[g]).unwrap();
    p
}

fn data(count: usize, seed: u64) -> (PairSet, PairSet, PairSet) {
    let mut rng = Rng::new(seed);
    let (c, a) = synth_generate(count, EpochKind::Muscle, &mut rng).unwrap();
    let pairs = augment(&c, &a, 2, SNR_RANGE, &mut rng).unwrap();
    let s = split(&pairs, [0.6, 0.2, 0.2], &mut rng).unwrap();
    (s.subset(Split::Train), s.subset(Split::Val), s.subset(Split::Test))
}

fn tiny_eegdnet() -> ModelConfig {
    ModelConfig::eegdnet(16, 32, 1, 1)
}

fn quick(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        batch_size: 8,
        lr: 1e-3,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_gradient_leaves_parameters() {
    let mut p = scalar_params(0.7, 0.0);
    let mut s = AdamState::new(&p, 5e-5, 0.5, 0.9, 1e-8);
    adam_step(&mut p, &mut s).unwrap();
    assert_eq!(p.get("theta").unwrap().data(), &[0.7]);
    assert_eq!(s.t, 1);
}

#[test]
fn first_step_moves_by_learning_rate() {
    for g in [1e-3, 0.5, -3.0, 100.0] {
        let mut p = scalar_params(1.0, g);
        let mut s = AdamState::new(&p, 5e-5, 0.5, 0.9, 1e-8);
        adam_step(&mut p, &mut s).unwrap();
        let delta = 1.0 - p.get("theta").unwrap().data()[0];
        // bias-corrected m̂ = g and √v̂ = |g|, so the step is lr·g/(|g| + ε)
        let expect = 5e-5 * g / (g.abs() + 1e-8);
        assert!((delta - expect).abs() < 1e-15, "{delta} vs {expect}");
        assert!((delta.abs() - 5e-5).abs() < 5e-5 * 1e-5);
    }
}

#[test]
fn two_steps_on_a_quadratic_follow_the_recurrence() {
    // f(θ) = θ²/2, so g = θ
    let (lr, b1, b2, eps) = (0.1, 0.5, 0.9, 1e-8);
    let mut theta = 2.0f64;
    let (mut m, mut v) = (0.0f64, 0.0f64);
    let mut expect = vec![];
    for t in 1..=2 {
        let g = theta;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        theta -= lr * mhat / (vhat.sqrt() + eps);
        expect.push(theta);
    }
    // by hand: step 1 gives 2 - 0.1 = 1.9; step 2 has m = 1.45, v = 0.721,
    // m̂ = 1.45/0.75, v̂ = 0.721/0.19 (ε moves each step by about 1e-9)
    assert!((expect[0] - 1.9).abs() < 1e-8);
    let step2 = 0.1 * (1.45 / 0.75) / (0.721f64 / 0.19).sqrt();
    assert!((expect[1] - (1.9 - step2)).abs() < 1e-8);

    let mut p = scalar_params(2.0, 2.0);
    let mut s = AdamState::new(&p, lr, b1, b2, eps);
    for e in &expect {
        adam_step(&mut p, &mut s).unwrap();
        let theta = p.get("theta").unwrap().data()[0];
        assert!((theta - e).abs() < 1e-15);
        p.zero_grads();
        p.get_mut("theta").unwrap().accumulate_grad(&[theta]).unwrap();
    }
    assert!(s.v["theta"][0] >= 0.0);
}

#[test]
fn nan_gradient_names_the_parameter() {
    let mut p = scalar_params(1.0, f64::NAN);
    let mut s = AdamState::new(&p, 0.1, 0.5, 0.9, 1e-8);
    match adam_step(&mut p, &mut s) {
        Err(Error::NanGradient(name)) => assert_eq!(name, "theta"),
        other => panic!("expected NanGradient, got {other:?}"),
    }
    assert_eq!(s.t, 0);
    assert_eq!(p.get("theta").unwrap().data(), &[1.0]);
}

#[test]
fn training_is_deterministic() {
    let (tr, va, _) = data(12, 1);
    let run = || {
        let mut t = Trainer::<f32>::new(tiny_eegdnet(), quick(3)).unwrap();
        t.train(&tr, &va, |_, _| Ok(())).unwrap();
        (t.log().losses_csv(), t.to_container().encode())
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, va, _) = data(12, 2);
    for kind in [ModelKind::EegDnet, ModelKind::Scnn] {
        let cfg = if kind == ModelKind::EegDnet { tiny_eegdnet() } else { ModelConfig::baseline(kind) };
        let cfg = ModelConfig { scnn_channels: 2, scnn_layers: 2, ..cfg };
        let mut straight = Trainer::<f32>::new(cfg.clone(), quick(4)).unwrap();
        straight.train(&tr, &va, |_, _| Ok(())).unwrap();

        let mut first = Trainer::<f32>::new(cfg, quick(2)).unwrap();
        first.train(&tr, &va, |_, _| Ok(())).unwrap();
        let path = dir.path().join("state.edn");
        first.save_checkpoint(&path).unwrap();
        let mut resumed = Trainer::<f32>::load_checkpoint(&path).unwrap();
        assert_eq!(resumed.params(), first.params());
        assert_eq!(resumed.adam(), first.adam());
        resumed.set_max_epochs(4);
        resumed.train(&tr, &va, |_, _| Ok(())).unwrap();

        assert_eq!(resumed.log().losses_csv(), straight.log().losses_csv());
        assert_eq!(resumed.params(), straight.params());
        assert_eq!(resumed.best_params(), straight.best_params());
        assert_eq!(resumed.to_container().encode(), straight.to_container().encode());
    }
}

#[test]
fn training_checkpoint_loads_as_best_model() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, va, _) = data(8, 3);
    let mut t = Trainer::<f32>::new(tiny_eegdnet(), quick(2)).unwrap();
    t.train(&tr, &va, |_, _| Ok(())).unwrap();
    let path = dir.path().join("state.edn");
    t.save_checkpoint(&path).unwrap();
    let (cfg, p) = crate::model::checkpoint::load_model::<f32>(&path).unwrap();
    assert_eq!(&cfg, t.model_config());
    assert_eq!(&p, t.best_params());
    let bytes = std::fs::read(&path).unwrap();
    assert!(Trainer::<f32>::from_container(
        &crate::model::checkpoint::Container::decode(&bytes[..bytes.len() / 2]).unwrap_or_default()
    )
    .is_err());
}

#[test]
fn best_parameters_reproduce_minimum_validation_loss() {
    let (tr, va, _) = data(12, 4);
    let mut t = Trainer::<f32>::new(tiny_eegdnet(), quick(5)).unwrap();
    t.train(&tr, &va, |_, _| Ok(())).unwrap();
    let min = t.log().epochs.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
    assert_eq!(t.log().best_val(), Some(min));
    let again = validation_mse(t.model_config(), t.best_params(), &va, 8).unwrap();
    assert_eq!(again.to_bits(), min.to_bits());
}

#[test]
fn identical_pairs_converge_by_patience() {
    // an artifact 200 dB down leaves y equal to x in 32-bit arithmetic
    let mut rng = Rng::new(5);
    let (c, a) = synth_generate(1, EpochKind::Ocular, &mut rng).unwrap();
    let pairs = augment(&c, &a, 8, (200.0, 200.0), &mut rng).unwrap();
    for i in 0..pairs.len() {
        let (y, x) = pairs.normalized(i);
        assert!(y.iter().zip(&x).all(|(a, b)| (*a as f32) == (*b as f32)));
    }
    let cfg = ModelConfig::eegdnet(16, 32, 1, 1);
    let tc = TrainConfig {
        max_epochs: 500,
        batch_size: 8,
        patience: 5,
        min_delta: 1e-4,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut t = Trainer::<f32>::new(cfg.clone(), tc).unwrap();
    let initial = validation_mse(&cfg, t.params(), &pairs, 8).unwrap();
    t.train(&pairs, &pairs, |_, _| Ok(())).unwrap();
    assert!(t.log().epochs[0].val_mse <= initial);
    assert!(t.log().epochs.len() < 500, "ran {} epochs", t.log().epochs.len());
}

#[test]
fn repeated_batch_loss_does_not_increase() {
    let (tr, _, _) = data(20, 6);
    let cfg = ModelConfig {
        dropout_p: 0.0,
        ..ModelConfig::eegdnet(16, 32, 2, 1)
    };
    let tc = TrainConfig {
        batch_size: 16,
        ..TrainConfig::default()
    };
    let mut t = Trainer::<f32>::new(cfg, tc).unwrap();
    let idx: Vec<usize> = (0..16).collect();
    let mut rng = Rng::new(0);
    let mut prev = f64::INFINITY;
    for _ in 0..30 {
        let loss = t.step(&tr, &idx, &mut rng).unwrap();
        assert!(loss <= prev + 1e-6, "{loss} > {prev}");
        prev = loss;
    }
}

#[test]
fn divergence_restores_the_epoch_start() {
    let (tr, va, _) = data(8, 7);
    let mut t = Trainer::<f32>::new(tiny_eegdnet(), quick(3)).unwrap();
    t.run_epoch(&tr, &va).unwrap();
    let good = t.params().clone();
    t.params_mut().get_mut("block0.ff.fc1.w").unwrap().data_mut().fill(3e38);
    let poisoned = t.params().clone();
    match t.run_epoch(&tr, &va) {
        Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 1),
        Err(Error::NanGradient(_)) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
    assert_eq!(t.params(), &poisoned);
    assert_ne!(t.params(), &good);
    assert_eq!(t.log().epochs.len(), 1);
}

#[test]
fn empty_split_is_rejected() {
    let (tr, va, _) = data(8, 8);
    let empty = tr.take(0);
    let mut t = Trainer::<f32>::new(tiny_eegdnet(), quick(1)).unwrap();
    assert!(t.run_epoch(&empty, &va).is_err());
    assert!(t.run_epoch(&tr, &empty).is_err());
}

#[test]
fn perfect_and_identity_estimators() {
    let (_, _, te) = data(10, 9);
    let perfect = evaluate_with(&te, 4, |idx, _| {
        Ok(idx
            .iter()
            .map(|&i| te.normalized(i).1)
            .collect())
    })
    .unwrap()
    .report();
    assert!(perfect.rrmse_temporal < 1e-12 && perfect.rrmse_spectral < 1e-12);
    assert!((perfect.cc - 1.0).abs() < 1e-12);

    let ident = evaluate_identity(&te).unwrap();
    let floor: f64 = (0..te.len())
        .map(|i| {
            let p = te.pairs()[i];
            p.mix.lambda * rms(&te.artifact(i)) / rms(&te.clean(i))
        })
        .sum::<f64>()
        / te.len() as f64;
    assert!((ident.report().rrmse_temporal - floor).abs() < 1e-9);
}

#[test]
fn report_is_mean_of_pairs_and_bins_partition() {
    let (_, _, te) = data(30, 10);
    let cfg = tiny_eegdnet();
    let p = init_params::<f32>(&cfg, &mut Rng::new(0)).unwrap();
    let ev = evaluate(&cfg, &p, &te, 5).unwrap();
    let r = ev.report();
    assert_eq!(r.pairs, te.len());
    let mean_cc = ev.per_pair.iter().map(|m| m.cc).sum::<f64>() / te.len() as f64;
    assert_eq!(r.cc, mean_cc);
    let bins = ev.by_snr(SNR_RANGE, 1.0);
    assert_eq!(bins.len(), 9);
    assert_eq!(bins.iter().map(|b| b.report.pairs).sum::<usize>(), te.len());
}
