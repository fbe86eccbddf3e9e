use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;

use super::{provenance, write_file, AblateArgs, BenchmarkArgs, RunConfig, VERSION};
use crate::data::{PairSet, Split};
use crate::error::{Error, Result};
use crate::metrics::{cost_report, CostReport};
use crate::model::{load_model, ModelConfig, ModelKind};
use crate::training::{evaluate, Evaluation, Trainer};

/// One line of a benchmark or evaluation table: either the average over all
/// SNRs (`snr_lo`/`snr_hi` empty) or one SNR bin. Metric fields are empty
/// when the model could not be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub snr_lo: Option<f64>,
    pub snr_hi: Option<f64>,
    pub rrmse_temporal: Option<f64>,
    pub rrmse_spectral: Option<f64>,
    pub cc: Option<f64>,
    pub pairs: usize,
    pub params: usize,
    pub flops: u64,
    pub storage_bytes: usize,
}

const TABLE_HEADER: &str = "model,snr_lo,snr_hi,rrmse_temporal,rrmse_spectral,cc,pairs,params,flops,storage_bytes";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl BenchmarkRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.model,
            opt(self.snr_lo),
            opt(self.snr_hi),
            opt(self.rrmse_temporal),
            opt(self.rrmse_spectral),
            opt(self.cc),
            self.pairs,
            self.params,
            self.flops,
            self.storage_bytes
        )
    }
}

/// The average row followed by one row per 1 dB bin of `snr_range`.
pub(crate) fn table_rows(
    model: &str,
    eval: Option<&Evaluation>,
    cost: &CostReport,
    snr_range: (f64, f64),
) -> Vec<BenchmarkRow> {
    let empty = Evaluation::default();
    let e = eval.unwrap_or(&empty);
    let row = |lo, hi, r: crate::metrics::MetricReport| BenchmarkRow {
        model: model.to_string(),
        snr_lo: lo,
        snr_hi: hi,
        rrmse_temporal: eval.map(|_| r.rrmse_temporal),
        rrmse_spectral: eval.map(|_| r.rrmse_spectral),
        cc: eval.map(|_| r.cc),
        pairs: r.pairs,
        params: cost.params,
        flops: cost.flops,
        storage_bytes: cost.storage_bytes,
    };
    let mut rows = vec![row(None, None, e.report())];
    rows.extend(
        e.by_snr(snr_range, 1.0)
            .into_iter()
            .map(|b| row(Some(b.lo), Some(b.hi), b.report)),
    );
    rows
}

pub(crate) fn table_csv(rows: &[BenchmarkRow], hash: &str) -> String {
    let mut s = provenance(hash);
    s.push_str(TABLE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Table<'a, R> {
    version: &'a str,
    config_hash: &'a str,
    rows: &'a [R],
}

pub(crate) fn table_json<R: Serialize>(rows: &[R], hash: &str) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Table {
        version: VERSION,
        config_hash: hash,
        rows,
    })?)
}

/// Runs `f` over `items` on scoped threads and returns results in order.
fn parallel_map<A: Sync, B: Send>(items: &[A], f: impl Fn(&A) -> Result<B> + Sync) -> Result<Vec<B>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|a| s.spawn(|| f(a))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("worker thread panicked".into()))))
            .collect()
    })
}

enum Entry {
    Loaded(ModelConfig, crate::model::ModelParams<f32>),
    Missing(ModelConfig),
}

pub(crate) fn cmd_benchmark(a: &BenchmarkArgs) -> Result<Vec<BenchmarkRow>> {
    let cfg = a.run.load()?;
    let out = a.run.out_dir(&cfg)?;
    let dir = a.checkpoints.clone().unwrap_or_else(|| out.clone());
    let kinds: Vec<ModelKind> = a.models.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for kind in &kinds {
        let candidates = [dir.join(format!("{}.edn", kind.name())), dir.join(kind.name()).join("model.edn")];
        if let Some(path) = candidates.iter().find(|p| p.exists()) {
            let (mcfg, params) = load_model::<f32>(&path)?;
            if mcfg.kind != *kind {
                return Err(Error::Config(format!(
                    "{} holds a {} model, not {}",
                    path.display(),
                    mcfg.kind,
                    kind
                )));
            }
            entries.push(Entry::Loaded(mcfg, params));
        } else {
            eprintln!(
                "warning: no checkpoint at {}; reporting cost only for {kind}",
                candidates[0].display()
            );
            let mcfg = if *kind == cfg.model.kind {
                cfg.model.clone()
            } else {
                ModelConfig::baseline(*kind)
            };
            entries.push(Entry::Missing(mcfg));
        }
    }
    let test = if entries.iter().any(|e| matches!(e, Entry::Loaded(..))) {
        Some(cfg.data.pairs()?.subset(Split::Test))
    } else {
        None
    };
    let batch = cfg.data.eval_batch;
    let range = (cfg.data.snr_min, cfg.data.snr_max);
    let tables = parallel_map(&entries, |e| {
        Ok(match e {
            Entry::Loaded(m, p) => {
                let ev = evaluate(m, p, test.as_ref().expect("pairs loaded"), batch)?;
                table_rows(m.kind.name(), Some(&ev), &cost_report(m)?, range)
            }
            Entry::Missing(m) => table_rows(m.kind.name(), None, &cost_report(m)?, range),
        })
    })?;
    let rows: Vec<BenchmarkRow> = tables.into_iter().flatten().collect();
    let hash = cfg.hash();
    write_file(&out.join("benchmark.csv"), table_csv(&rows, &hash))?;
    write_file(&out.join("benchmark.json"), table_json(&rows, &hash)?)?;
    println!("{:<10} {:>10} {:>14} {:>14} {:>8} {:>8}", "model", "params", "flops", "rrmse_t", "rrmse_s", "cc");
    for r in rows.iter().filter(|r| r.snr_lo.is_none()) {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<10} {:>10} {:>14} {:>14} {:>8} {:>8}",
            r.model,
            r.params,
            r.flops,
            f(r.rrmse_temporal),
            f(r.rrmse_spectral),
            f(r.cc)
        );
    }
    println!("wrote {}", out.join("benchmark.csv").display());
    Ok(rows)
}

/// Architecture axis swept by `ablate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Kq,
    Depths,
    Heads,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Kq => "kq",
            Axis::Depths => "depths",
            Axis::Heads => "heads",
        })
    }
}

/// The grid each axis is swept over by default.
pub fn ablation_values(axis: Axis) -> Vec<String> {
    let v: &[&str] = match axis {
        Axis::Kq => &["2x256", "4x128", "8x64", "16x32", "32x16", "128x4"],
        Axis::Depths => &["2", "4", "6", "8", "10"],
        Axis::Heads => &["1", "2", "4", "8", "16"],
    };
    v.iter().map(|s| s.to_string()).collect()
}

impl Axis {
    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ModelConfig, value: &str) -> Result<ModelConfig> {
        let bad = || Error::Parameter(format!("invalid {self} value `{value}`"));
        let int = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        let mut m = ModelConfig {
            kind: ModelKind::EegDnet,
            ..base.clone()
        };
        match self {
            Axis::Kq => {
                let (k, q) = value.split_once(['x', 'X', '*']).ok_or_else(bad)?;
                m.k = int(k)?;
                m.q = int(q)?;
                m.ff_hidden = 2 * m.q;
            }
            Axis::Depths => m.depths = int(value)?,
            Axis::Heads => m.heads = int(value)?,
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize)]
struct AblationRow {
    value: String,
    params: usize,
    params_k: f64,
    flops: u64,
    rrmse_temporal: Option<f64>,
    rrmse_spectral: Option<f64>,
    cc: Option<f64>,
}

fn train_and_score(cfg: &RunConfig, model: &ModelConfig, pairs: &PairSet) -> Result<crate::metrics::MetricReport> {
    let (train, val, test) = (pairs.subset(Split::Train), pairs.subset(Split::Val), pairs.subset(Split::Test));
    let mut t = Trainer::<f32>::new(model.clone(), cfg.train.clone())?;
    t.train(&train, &val, |_, _| Ok(()))?;
    Ok(evaluate(model, t.best_params(), &test, cfg.data.eval_batch)?.report())
}

pub(crate) fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let out = a.run.out_dir(&cfg)?;
    let values = if a.values.is_empty() {
        ablation_values(a.axis)
    } else {
        a.values.clone()
    };
    let models: Vec<ModelConfig> = values
        .iter()
        .map(|v| a.axis.apply(&cfg.model, v))
        .collect::<Result<_>>()?;
    let pairs = if a.accounting_only { None } else { Some(cfg.data.pairs()?) };
    let scores = parallel_map(&models, |m| match &pairs {
        Some(p) => train_and_score(&cfg, m, p).map(Some),
        None => Ok(None),
    })?;
    let mut rows = Vec::new();
    for ((value, m), score) in values.iter().zip(&models).zip(scores) {
        let cost = cost_report(m)?;
        rows.push(AblationRow {
            value: value.clone(),
            params: cost.params,
            params_k: cost.params as f64 / 1000.0,
            flops: cost.flops,
            rrmse_temporal: score.as_ref().map(|r| r.rrmse_temporal),
            rrmse_spectral: score.as_ref().map(|r| r.rrmse_spectral),
            cc: score.as_ref().map(|r| r.cc),
        });
    }
    let hash = cfg.hash();
    let mut csv = provenance(&hash);
    csv.push_str(&format!("{},params,params_k,flops,rrmse_temporal,rrmse_spectral,cc\n", a.axis));
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.value,
            r.params,
            r.params_k,
            r.flops,
            opt(r.rrmse_temporal),
            opt(r.rrmse_spectral),
            opt(r.cc)
        ));
    }
    let stem: PathBuf = out.join(format!("ablate_{}", a.axis));
    write_file(&stem.with_extension("csv"), &csv)?;
    write_file(&stem.with_extension("json"), table_json(&rows, &hash)?)?;
    print!("{csv}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kq_axis_sets_width_and_rejects_bad_products() {
        let base = ModelConfig::default();
        let m = Axis::Kq.apply(&base, "16x32").unwrap();
        assert_eq!((m.k, m.q, m.ff_hidden), (16, 32, 64));
        assert!(matches!(Axis::Kq.apply(&base, "16x16"), Err(Error::Dimension(_))));
        assert!(matches!(Axis::Kq.apply(&base, "sixteen"), Err(Error::Parameter(_))));
        assert!(matches!(Axis::Heads.apply(&base, "0"), Err(Error::Config(_))));
    }

    #[test]
    fn default_grids_are_valid() {
        for axis in [Axis::Kq, Axis::Depths, Axis::Heads] {
            for v in ablation_values(axis) {
                axis.apply(&ModelConfig::default(), &v).unwrap();
            }
        }
    }

    #[test]
    fn rows_cover_average_and_every_bin() {
        let cost = cost_report(&ModelConfig::tiny(ModelKind::Dln)).unwrap();
        let rows = table_rows("dln", None, &cost, (-7.0, 2.0));
        assert_eq!(rows.len(), 10);
        assert!(rows[0].snr_lo.is_none() && rows[0].cc.is_none());
        assert_eq!(rows[9].snr_hi, Some(2.0));
        let csv = table_csv(&rows, "abc");
        assert!(csv.starts_with("# eegdnet "));
        assert_eq!(csv.lines().count(), 2 + 1 + 10);
    }
}
