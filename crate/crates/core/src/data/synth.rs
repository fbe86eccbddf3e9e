//! Seeded synthetic epochs standing in for recorded EEG and artifacts.
//!
//! - clean: sum of three sinusoids at multiples of 0.5 Hz in 1–40 Hz
//!   (bin-aligned for a 2 s epoch, so no spectral leakage above 40 Hz),
//!   amplitudes in [0.5, 2], random phases;
//! - ocular: two drifts at multiples of 0.5 Hz in 0.5–4.5 Hz plus one
//!   Gaussian blink of width 0.1–0.25 s;
//! - muscle: complex Gaussian spectrum on the 40–128 Hz bins, inverse FFT.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics::ifft;
use crate::numerics::Rng;
use crate::{EPOCH_LEN, SAMPLE_RATE};

use super::{EpochKind, EpochSet};

fn tone(out: &mut [f64], freq: f64, amp: f64, phase: f64) {
    for (i, v) in out.iter_mut().enumerate() {
        *v += amp * (TAU * freq * i as f64 / SAMPLE_RATE + phase).sin();
    }
}

fn to_f32(v: Vec<f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

pub fn synth_clean(rng: &mut Rng) -> Vec<f32> {
    let mut out = vec![0.0; EPOCH_LEN];
    for _ in 0..3 {
        let freq = 0.5 * (2 + rng.below(79)) as f64;
        let amp = rng.uniform_range(0.5, 2.0);
        let phase = rng.uniform_range(0.0, TAU);
        tone(&mut out, freq, amp, phase);
    }
    to_f32(out)
}

pub fn synth_ocular(rng: &mut Rng) -> Vec<f32> {
    let mut out = vec![0.0; EPOCH_LEN];
    for _ in 0..2 {
        let freq = 0.5 * (1 + rng.below(9)) as f64;
        let amp = rng.uniform_range(1.0, 3.0);
        let phase = rng.uniform_range(0.0, TAU);
        tone(&mut out, freq, amp, phase);
    }
    let center = rng.uniform_range(0.25, 1.75);
    let width = rng.uniform_range(0.1, 0.25);
    let height = rng.uniform_range(2.0, 6.0);
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / SAMPLE_RATE;
        *v += height * (-0.5 * ((t - center) / width).powi(2)).exp();
    }
    to_f32(out)
}

pub fn synth_muscle(rng: &mut Rng) -> Vec<f32> {
    let resolution = SAMPLE_RATE / EPOCH_LEN as f64;
    let lo = (40.0 / resolution) as usize;
    let nyquist = EPOCH_LEN / 2;
    let mut spec = vec![Complex64::new(0.0, 0.0); EPOCH_LEN];
    for b in lo..nyquist {
        let z = Complex64::new(rng.normal(), rng.normal());
        spec[b] = z;
        spec[EPOCH_LEN - b] = z.conj();
    }
    let wave = ifft(&spec).expect("power-of-two epoch length");
    let re: Vec<f64> = wave.iter().map(|z| z.re).collect();
    let r = crate::metrics::rms(&re);
    to_f32(re.into_iter().map(|v| v / r).collect())
}

/// `count` clean epochs followed by `count` artifact epochs of kind
/// `artifact`, all from `rng`.
pub fn synth_generate(count: usize, artifact: EpochKind, rng: &mut Rng) -> Result<(EpochSet, EpochSet)> {
    if count == 0 {
        return Err(Error::Parameter("synthetic count must be at least 1".into()));
    }
    let gen: fn(&mut Rng) -> Vec<f32> = match artifact {
        EpochKind::Ocular => synth_ocular,
        EpochKind::Muscle => synth_muscle,
        EpochKind::Clean => {
            return Err(Error::Parameter("artifact kind must be ocular or muscle".into()));
        }
    };
    let clean = (0..count).map(|_| synth_clean(rng)).collect();
    let art = (0..count).map(|_| gen(rng)).collect();
    Ok((EpochSet::new(EpochKind::Clean, clean)?, EpochSet::new(artifact, art)?))
}
