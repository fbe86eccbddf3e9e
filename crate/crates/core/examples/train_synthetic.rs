//! Train the transformer on a small synthetic set and compare it with the
//! do-nothing estimator on the test split.
//!
//! `cargo run --release --example train_synthetic -- [epochs] [ocular|muscle]`

use eegdnet::data::{self, EpochKind, Split, SNR_RANGE, SPLIT_RATIOS};
use eegdnet::model::ModelConfig;
use eegdnet::numerics::Rng;
use eegdnet::training::{evaluate, evaluate_identity, TrainConfig, Trainer};

fn main() -> eegdnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let kind: EpochKind = args.next().map_or(Ok(EpochKind::Ocular), |s| s.parse())?;

    let mut rng = Rng::new(0);
    let (clean, artifact) = data::synth_generate(200, kind, &mut rng)?;
    let pairs = data::split(&data::augment(&clean, &artifact, 10, SNR_RANGE, &mut rng)?, SPLIT_RATIOS, &mut rng)?;
    let (train, val, test) = (pairs.subset(Split::Train), pairs.subset(Split::Val), pairs.subset(Split::Test));

    let model = ModelConfig::eegdnet(16, 32, 2, 1);
    let config = TrainConfig {
        max_epochs: epochs,
        batch_size: 100,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(model.clone(), config)?;
    trainer.train(&train, &val, |r, _| {
        if r.epoch % 10 == 0 {
            println!("epoch {:>4}  train {:.4}  val {:.4}", r.epoch, r.train_mse, r.val_mse);
        }
        Ok(())
    })?;
    let m = evaluate(&model, trainer.best_params(), &test, 256)?.report();
    let id = evaluate_identity(&test)?.report();
    println!("model    rrmse_t {:.3}  rrmse_s {:.3}  cc {:.3}", m.rrmse_temporal, m.rrmse_spectral, m.cc);
    println!("identity rrmse_t {:.3}  rrmse_s {:.3}  cc {:.3}", id.rrmse_temporal, id.rrmse_spectral, id.cc);
    Ok(())
}
