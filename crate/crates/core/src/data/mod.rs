//! Epoch sets, semi-synthetic mixing and dataset preparation.
//!
//! A noisy epoch is `y = x + λn` for a clean epoch `x` and an artifact epoch
//! `n`. The contribution factor `λ` is chosen so that the pair hits a target
//! SNR, defined here as `10·log10(RMS(x) / RMS(λn))`.

mod io;
mod synth;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::metrics::rms;
use crate::numerics::Rng;
use crate::EPOCH_LEN;

pub use io::{decode_epk, encode_epk, load_epochs, read_csv, save_epochs, write_csv, EPK_MAGIC};
pub use synth::{synth_clean, synth_generate, synth_muscle, synth_ocular};

/// SNR range swept by augmentation, in dB.
pub const SNR_RANGE: (f64, f64) = (-7.0, 2.0);
/// Noisy copies made of each clean epoch.
pub const AUGMENT_TIMES: usize = 10;
/// Train / validation / test fractions.
pub const SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EpochKind {
    Clean,
    Ocular,
    Muscle,
}

impl EpochKind {
    pub fn code(self) -> u8 {
        match self {
            EpochKind::Clean => 0,
            EpochKind::Ocular => 1,
            EpochKind::Muscle => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EpochKind::Clean),
            1 => Some(EpochKind::Ocular),
            2 => Some(EpochKind::Muscle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EpochKind::Clean => "clean",
            EpochKind::Ocular => "ocular",
            EpochKind::Muscle => "muscle",
        }
    }
}

impl fmt::Display for EpochKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EpochKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clean" | "eeg" => Ok(EpochKind::Clean),
            "ocular" | "eog" => Ok(EpochKind::Ocular),
            "muscle" | "emg" => Ok(EpochKind::Muscle),
            other => Err(Error::Config(format!("unknown epoch kind `{other}`"))),
        }
    }
}

/// Epochs of one kind, each exactly [`EPOCH_LEN`] finite samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSet {
    kind: EpochKind,
    epochs: Vec<Vec<f32>>,
}

impl EpochSet {
    /// Rejects wrong-length or non-finite epochs with the offending index.
    pub fn new(kind: EpochKind, epochs: Vec<Vec<f32>>) -> Result<Self> {
        for (i, e) in epochs.iter().enumerate() {
            if e.len() != EPOCH_LEN {
                return Err(Error::format(
                    i,
                    format!("expected {EPOCH_LEN} samples, found {}", e.len()),
                ));
            }
            if let Some(j) = e.iter().position(|v| !v.is_finite()) {
                return Err(Error::format(i, format!("non-finite sample at position {j}")));
            }
        }
        Ok(EpochSet { kind, epochs })
    }

    pub fn kind(&self) -> EpochKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn epochs(&self) -> &[Vec<f32>] {
        &self.epochs
    }

    pub fn epoch(&self, i: usize) -> &[f32] {
        &self.epochs[i]
    }

    pub fn epoch_f64(&self, i: usize) -> Vec<f64> {
        self.epochs[i].iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixSpec {
    pub snr_db: f64,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// One augmented example: indices into the clean and artifact sets, the mix,
/// and the normalization scale `std(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair {
    pub clean: usize,
    pub artifact: usize,
    pub mix: MixSpec,
    pub scale: f64,
    pub split: Split,
}

/// Augmented pairs. Noisy epochs are not stored; they are re-mixed from the
/// source sets on access.
#[derive(Clone, Debug)]
pub struct PairSet {
    clean: Arc<EpochSet>,
    artifact: Arc<EpochSet>,
    pairs: Vec<Pair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn clean_set(&self) -> &EpochSet {
        &self.clean
    }

    pub fn artifact_set(&self) -> &EpochSet {
        &self.artifact
    }

    pub fn clean(&self, i: usize) -> Vec<f64> {
        self.clean.epoch_f64(self.pairs[i].clean)
    }

    pub fn artifact(&self, i: usize) -> Vec<f64> {
        self.artifact.epoch_f64(self.pairs[i].artifact)
    }

    pub fn noisy(&self, i: usize) -> Vec<f64> {
        let p = &self.pairs[i];
        let x = self.clean.epoch(p.clean);
        let n = self.artifact.epoch(p.artifact);
        x.iter()
            .zip(n)
            .map(|(&x, &n)| f64::from(x) + p.mix.lambda * f64::from(n))
            .collect()
    }

    /// `(y / scale, x / scale)` for pair `i`.
    pub fn normalized(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let s = self.pairs[i].scale;
        let y = self.noisy(i).into_iter().map(|v| v / s).collect();
        let x = self.clean(i).into_iter().map(|v| v / s).collect();
        (y, x)
    }

    pub fn count(&self, split: Split) -> usize {
        self.pairs.iter().filter(|p| p.split == split).count()
    }

    /// The pairs tagged `split`, in their current order.
    pub fn subset(&self, split: Split) -> PairSet {
        PairSet {
            clean: Arc::clone(&self.clean),
            artifact: Arc::clone(&self.artifact),
            pairs: self.pairs.iter().filter(|p| p.split == split).copied().collect(),
        }
    }

    pub fn take(&self, n: usize) -> PairSet {
        PairSet {
            clean: Arc::clone(&self.clean),
            artifact: Arc::clone(&self.artifact),
            pairs: self.pairs.iter().take(n).copied().collect(),
        }
    }
}

/// `λ = RMS(x) / (RMS(n) · 10^(snr_db/10))`.
pub fn compute_lambda(x: &[f64], n: &[f64], snr_db: f64) -> Result<f64> {
    if x.len() != n.len() {
        return Err(Error::Dimension(format!(
            "clean and artifact lengths differ: {} vs {}",
            x.len(),
            n.len()
        )));
    }
    let (rx, rn) = (rms(x), rms(n));
    if rn == 0.0 {
        return Err(Error::Degenerate("artifact epoch is silent (RMS 0)".into()));
    }
    if rx == 0.0 {
        return Err(Error::Degenerate("clean epoch is silent (RMS 0)".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!("SNR must be finite, got {snr_db}")));
    }
    Ok(rx / (rn * 10f64.powf(snr_db / 10.0)))
}

/// `10·log10(RMS(x) / RMS(λn))`.
pub fn measured_snr(x: &[f64], n: &[f64], lambda: f64) -> f64 {
    10.0 * (rms(x) / (lambda.abs() * rms(n))).log10()
}

pub fn mix(x: &[f64], n: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if x.len() != n.len() {
        return Err(Error::Dimension(format!(
            "clean and artifact lengths differ: {} vs {}",
            x.len(),
            n.len()
        )));
    }
    Ok(x.iter().zip(n).map(|(x, n)| x + lambda * n).collect())
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Divides both epochs by `std(y)`; the scale is returned for undoing it.
pub fn normalize_pair(y: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let scale = std_dev(y);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Degenerate("noisy epoch has zero variance".into()));
    }
    Ok((
        y.iter().map(|v| v / scale).collect(),
        x.iter().map(|v| v / scale).collect(),
        scale,
    ))
}

/// Pairs every clean epoch with `times` artifact epochs drawn with
/// replacement, each at an SNR drawn uniformly from `snr_range`. Pairs are
/// ordered clean-major and all tagged [`Split::Train`].
pub fn augment(
    clean: &EpochSet,
    artifact: &EpochSet,
    times: usize,
    snr_range: (f64, f64),
    rng: &mut Rng,
) -> Result<PairSet> {
    if times == 0 {
        return Err(Error::Parameter("augmentation times must be at least 1".into()));
    }
    if clean.is_empty() || artifact.is_empty() {
        return Err(Error::Degenerate("augmentation needs non-empty clean and artifact sets".into()));
    }
    let (lo, hi) = snr_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Parameter(format!("invalid SNR range [{lo}, {hi}]")));
    }
    let mut pairs = Vec::with_capacity(clean.len() * times);
    for c in 0..clean.len() {
        let x = clean.epoch_f64(c);
        for _ in 0..times {
            let a = rng.below(artifact.len());
            let snr_db = rng.uniform_range(lo, hi);
            let n = artifact.epoch_f64(a);
            let lambda = compute_lambda(&x, &n, snr_db)?;
            let y = mix(&x, &n, lambda)?;
            let scale = std_dev(&y);
            if scale == 0.0 {
                return Err(Error::Degenerate(format!("noisy epoch for clean {c} has zero variance")));
            }
            pairs.push(Pair {
                clean: c,
                artifact: a,
                mix: MixSpec { snr_db, lambda },
                scale,
                split: Split::Train,
            });
        }
    }
    Ok(PairSet {
        clean: Arc::new(clean.clone()),
        artifact: Arc::new(artifact.clone()),
        pairs,
    })
}

/// Shuffled split by clean epoch, so all copies of one clean epoch share a
/// split. With `G` clean epochs, `round(r₀G)` go to train, `round(r₁G)` to
/// validation and the rest to test.
pub fn split(pairs: &PairSet, ratios: [f64; 3], rng: &mut Rng) -> Result<PairSet> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    let mut groups: Vec<usize> = pairs.pairs.iter().map(|p| p.clean).collect();
    groups.sort_unstable();
    groups.dedup();
    rng.shuffle(&mut groups);
    let g = groups.len();
    let n_train = ((ratios[0] * g as f64).round() as usize).min(g);
    let n_val = ((ratios[1] * g as f64).round() as usize).min(g - n_train);
    let mut tag = vec![Split::Test; pairs.clean.len()];
    for (rank, &c) in groups.iter().enumerate() {
        tag[c] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);
    Ok(PairSet {
        clean: Arc::clone(&pairs.clean),
        artifact: Arc::clone(&pairs.artifact),
        pairs: order
            .into_iter()
            .map(|i| Pair {
                split: tag[pairs.pairs[i].clean],
                ..pairs.pairs[i]
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests;
