use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::checkpoint::encoded_size;
use crate::model::{count_flops, count_params, init_params, ModelConfig};
use crate::numerics::Rng;

use super::{cc, rrmse_spectral, rrmse_temporal};

/// Quality of one model on a set of pairs plus its cost.
///
/// CSV field order is [`MetricReport::CSV_HEADER`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rrmse_temporal: f64,
    pub rrmse_spectral: f64,
    pub cc: f64,
    pub params: usize,
    pub flops: u64,
    pub storage_bytes: usize,
    /// Number of pairs averaged.
    pub pairs: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairMetrics {
    pub rrmse_temporal: f64,
    pub rrmse_spectral: f64,
    pub cc: f64,
}

impl PairMetrics {
    /// A constant estimate has no defined correlation; it scores `cc = 0`.
    pub fn compute(xhat: &[f64], x: &[f64]) -> Result<Self> {
        let flat = xhat.iter().all(|&v| v == xhat[0]) && !xhat.is_empty();
        Ok(PairMetrics {
            rrmse_temporal: rrmse_temporal(xhat, x)?,
            rrmse_spectral: rrmse_spectral(xhat, x)?,
            cc: if flat { 0.0 } else { cc(xhat, x)? },
        })
    }
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "rrmse_temporal,rrmse_spectral,cc,params,flops,storage_bytes,pairs";

    /// Plain averages of per-pair metrics; cost fields are left at zero.
    pub fn average(items: &[PairMetrics]) -> Self {
        let n = items.len().max(1) as f64;
        MetricReport {
            rrmse_temporal: items.iter().map(|m| m.rrmse_temporal).sum::<f64>() / n,
            rrmse_spectral: items.iter().map(|m| m.rrmse_spectral).sum::<f64>() / n,
            cc: items.iter().map(|m| m.cc).sum::<f64>() / n,
            pairs: items.len(),
            ..Self::default()
        }
    }

    pub fn with_cost(mut self, cost: &CostReport) -> Self {
        self.params = cost.params;
        self.flops = cost.flops;
        self.storage_bytes = cost.storage_bytes;
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.rrmse_temporal, self.rrmse_spectral, self.cc, self.params, self.flops, self.storage_bytes, self.pairs
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: usize,
    pub flops: u64,
    /// Size of the parameters-only checkpoint file.
    pub storage_bytes: usize,
}

/// Analytic parameter and FLOP counts, and the exact checkpoint size.
pub fn cost_report(cfg: &ModelConfig) -> Result<CostReport> {
    let params = init_params::<f32>(cfg, &mut Rng::new(0))?;
    Ok(CostReport {
        params: count_params(cfg),
        flops: count_flops(cfg),
        storage_bytes: encoded_size(cfg, &params),
    })
}
