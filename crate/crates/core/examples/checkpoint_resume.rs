//! Stop training halfway, write the full state, reload it and finish. The
//! result is bit-identical to an uninterrupted run.

use eegdnet::data::{self, EpochKind, Split, SNR_RANGE, SPLIT_RATIOS};
use eegdnet::model::{load_model, ModelConfig};
use eegdnet::numerics::Rng;
use eegdnet::training::{TrainConfig, Trainer};

fn main() -> eegdnet::Result<()> {
    let mut rng = Rng::new(4);
    let (clean, artifact) = data::synth_generate(30, EpochKind::Muscle, &mut rng)?;
    let pairs = data::split(&data::augment(&clean, &artifact, 4, SNR_RANGE, &mut rng)?, SPLIT_RATIOS, &mut rng)?;
    let (train, val) = (pairs.subset(Split::Train), pairs.subset(Split::Val));
    let model = ModelConfig::eegdnet(16, 32, 1, 1);
    let config = TrainConfig {
        max_epochs: 6,
        batch_size: 32,
        ..TrainConfig::default()
    };

    let mut full = Trainer::<f32>::new(model.clone(), config.clone())?;
    full.train(&train, &val, |_, _| Ok(()))?;

    let dir = std::env::temp_dir().join("eegdnet-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| eegdnet::Error::Contract(e.to_string()))?;
    let path = dir.join("state.edn");
    let mut half = Trainer::<f32>::new(model, config)?;
    for _ in 0..3 {
        half.run_epoch(&train, &val)?;
    }
    half.save_checkpoint(&path)?;
    let mut resumed = Trainer::<f32>::load_checkpoint(&path)?;
    resumed.train(&train, &val, |_, _| Ok(()))?;

    println!("uninterrupted log == resumed log: {}", full.log().losses_csv() == resumed.log().losses_csv());
    println!("best params equal: {}", full.best_params() == resumed.best_params());
    let (_, best) = load_model::<f32>(&path)?;
    println!("training state loads as a model with {} scalars", best.num_scalars());
    Ok(())
}
