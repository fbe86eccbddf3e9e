//! Generate synthetic epochs, mix them at random SNRs and split by clean
//! epoch. Prints the measured SNR of a few pairs next to the target.

use eegdnet::data::{self, measured_snr, EpochKind, Split, AUGMENT_TIMES, SNR_RANGE, SPLIT_RATIOS};
use eegdnet::numerics::Rng;

fn main() -> eegdnet::Result<()> {
    let mut rng = Rng::new(1);
    let (clean, ocular) = data::synth_generate(50, EpochKind::Ocular, &mut rng)?;
    let pairs = data::augment(&clean, &ocular, AUGMENT_TIMES, SNR_RANGE, &mut rng)?;
    let pairs = data::split(&pairs, SPLIT_RATIOS, &mut rng)?;
    for split in Split::ALL {
        println!("{split:?}: {} pairs", pairs.count(split));
    }
    println!("{:>8} {:>10} {:>10} {:>8}", "target", "measured", "lambda", "scale");
    for (i, p) in pairs.pairs().iter().take(5).enumerate() {
        let s = measured_snr(&pairs.clean(i), &pairs.artifact(i), p.mix.lambda);
        println!("{:>8.3} {:>10.3} {:>10.4} {:>8.3}", p.mix.snr_db, s, p.mix.lambda, p.scale);
    }
    Ok(())
}
