use serde::{Deserialize, Serialize};

use crate::data::PairSet;
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, PairMetrics};
use crate::model::{predict, ModelConfig, ModelParams};
use crate::numerics::Scalar;

/// Per-pair metrics with the SNR each pair was mixed at.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub per_pair: Vec<PairMetrics>,
    pub snr_db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrBin {
    pub lo: f64,
    pub hi: f64,
    pub report: MetricReport,
}

impl Evaluation {
    pub fn report(&self) -> MetricReport {
        MetricReport::average(&self.per_pair)
    }

    /// Averages within `[lo, lo + width)` bins covering `range`; the last bin
    /// also takes its upper edge. Empty bins report zero pairs.
    pub fn by_snr(&self, range: (f64, f64), width: f64) -> Vec<SnrBin> {
        let count = ((range.1 - range.0) / width).round().max(1.0) as usize;
        (0..count)
            .map(|b| {
                let lo = range.0 + b as f64 * width;
                let hi = lo + width;
                let last = b + 1 == count;
                let items: Vec<PairMetrics> = self
                    .per_pair
                    .iter()
                    .zip(&self.snr_db)
                    .filter(|(_, &s)| s >= lo && (s < hi || (last && s <= hi)))
                    .map(|(m, _)| *m)
                    .collect();
                SnrBin {
                    lo,
                    hi,
                    report: MetricReport::average(&items),
                }
            })
            .collect()
    }
}

/// Scores an arbitrary estimator. `estimate` receives normalized noisy
/// epochs and returns normalized estimates; metrics are taken after
/// multiplying back by each pair's scale.
pub fn evaluate_with(
    pairs: &PairSet,
    batch: usize,
    mut estimate: impl FnMut(&[usize], &[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
) -> Result<Evaluation> {
    let mut out = Evaluation::default();
    let order: Vec<usize> = (0..pairs.len()).collect();
    for chunk in order.chunks(batch.max(1)) {
        let ys: Vec<Vec<f64>> = chunk.iter().map(|&i| pairs.normalized(i).0).collect();
        let est = estimate(chunk, &ys)?;
        if est.len() != chunk.len() {
            return Err(Error::Contract("estimator returned the wrong number of epochs".into()));
        }
        for (&i, xhat) in chunk.iter().zip(est) {
            let p = &pairs.pairs()[i];
            let xhat: Vec<f64> = xhat.iter().map(|v| v * p.scale).collect();
            out.per_pair.push(PairMetrics::compute(&xhat, &pairs.clean(i))?);
            out.snr_db.push(p.mix.snr_db);
        }
    }
    Ok(out)
}

/// Eval-mode metrics of a trained model on `pairs`.
pub fn evaluate<T: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    pairs: &PairSet,
    batch: usize,
) -> Result<Evaluation> {
    evaluate_with(pairs, batch, |_, ys| {
        let ys: Vec<Vec<T>> = ys
            .iter()
            .map(|y| y.iter().map(|&v| T::from_f64_lossy(v)).collect())
            .collect();
        let out = predict(cfg, params, &ys, ys.len())?;
        Ok(out
            .into_iter()
            .map(|x| x.into_iter().map(T::as_f64).collect())
            .collect())
    })
}

/// The do-nothing baseline `x̂ = y`.
pub fn evaluate_identity(pairs: &PairSet) -> Result<Evaluation> {
    evaluate_with(pairs, 256, |_, ys| Ok(ys.to_vec()))
}
