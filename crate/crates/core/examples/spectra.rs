//! Power spectra of a clean, an ocular and a muscle epoch, and the metrics
//! of a noisy mixture against its clean source.

use eegdnet::data::{compute_lambda, mix, synth_clean, synth_muscle, synth_ocular};
use eegdnet::metrics::{cc, psd, rrmse_spectral, rrmse_temporal};
use eegdnet::numerics::Rng;

fn to64(v: Vec<f32>) -> Vec<f64> {
    v.into_iter().map(f64::from).collect()
}

fn main() -> eegdnet::Result<()> {
    let mut rng = Rng::new(2);
    let clean = to64(synth_clean(&mut rng));
    let ocular = to64(synth_ocular(&mut rng));
    let muscle = to64(synth_muscle(&mut rng));
    for (name, v) in [("clean", &clean), ("ocular", &ocular), ("muscle", &muscle)] {
        let s = psd(v)?;
        println!(
            "{name:<7} power {:>8.3}  0-4 Hz {:>6.1}%  30-128 Hz {:>6.1}%",
            s.total_power(),
            100.0 * s.band_power(0.0, 4.0) / s.total_power(),
            100.0 * s.band_power(30.0, 128.0) / s.total_power()
        );
    }
    for snr in [-7.0, -2.0, 2.0] {
        let y = mix(&clean, &muscle, compute_lambda(&clean, &muscle, snr)?)?;
        println!(
            "muscle at {snr:>4} dB: rrmse_t {:.3} rrmse_s {:.3} cc {:.3}",
            rrmse_temporal(&y, &clean)?,
            rrmse_spectral(&y, &clean)?,
            cc(&y, &clean)?
        );
    }
    Ok(())
}
