use std::path::{Path, PathBuf};

use serde::Serialize;

use super::report::{table_csv, table_json, table_rows};
use super::{provenance, write_file, DenoiseArgs, EvalArgs, TrainArgs, VERSION};
use crate::data::{self, EpochKind, EpochSet, PairSet, Split};
use crate::error::{Error, Result};
use crate::metrics::{cost_report, CostReport, MetricReport};
use crate::model::{load_model, predict, save_model, ModelConfig, ModelParams};
use crate::training::{evaluate, evaluate_identity, Trainer};

pub(crate) const MODEL_FILE: &str = "model.edn";
pub(crate) const STATE_FILE: &str = "train_state.edn";

#[derive(Serialize)]
struct ReportFile<'a> {
    version: &'a str,
    config_hash: &'a str,
    report: &'a MetricReport,
}

fn write_report(out: &Path, stem: &str, report: &MetricReport, hash: &str) -> Result<()> {
    let csv = format!("{}{}\n{}\n", provenance(hash), MetricReport::CSV_HEADER, report.csv_row());
    write_file(&out.join(format!("{stem}.csv")), csv)?;
    let json = serde_json::to_string_pretty(&ReportFile {
        version: VERSION,
        config_hash: hash,
        report,
    })?;
    write_file(&out.join(format!("{stem}.json")), json)
}

/// Trains per the run configuration and returns the output directory.
///
/// Writes `model.edn` (best parameters), `train_state.edn` (resumable
/// state, refreshed every epoch), `train_log.csv` (losses; deterministic),
/// `train_timing.csv` (wall time), `run.cfg` and `test_report.{csv,json}`.
pub(crate) fn cmd_train(a: &TrainArgs) -> Result<PathBuf> {
    let cfg = a.run.load()?;
    let out = a.run.out_dir(&cfg)?;
    let hash = cfg.hash();
    write_file(&out.join("run.cfg"), cfg.canonical())?;
    let pairs = cfg.data.pairs()?;
    let (train, val, test) = (pairs.subset(Split::Train), pairs.subset(Split::Val), pairs.subset(Split::Test));
    let state = out.join(STATE_FILE);
    let mut trainer = if a.resume && state.exists() {
        let mut t = Trainer::<f32>::load_checkpoint(&state)?;
        let mut expected = cfg.train.clone();
        expected.max_epochs = t.train_config().max_epochs;
        if t.model_config() != &cfg.model || t.train_config() != &expected {
            return Err(Error::Config(format!(
                "{} was written by a different configuration",
                state.display()
            )));
        }
        t.set_max_epochs(cfg.train.max_epochs);
        t
    } else {
        Trainer::<f32>::new(cfg.model.clone(), cfg.train.clone())?
    };
    if !a.quiet {
        eprintln!(
            "training {} ({} params) on {} / {} / {} pairs",
            cfg.model.kind,
            trainer.params().num_scalars(),
            train.len(),
            val.len(),
            test.len()
        );
    }
    let quiet = a.quiet;
    trainer.train(&train, &val, |r, t| {
        if !quiet {
            eprintln!(
                "epoch {:>5}  train {:.6}  val {:.6}  {:.2}s",
                r.epoch, r.train_mse, r.val_mse, r.seconds
            );
        }
        t.save_checkpoint(&state)
    })?;
    trainer.save_checkpoint(&state)?;
    save_model(&out.join(MODEL_FILE), &cfg.model, trainer.best_params())?;
    let log = trainer.log();
    write_file(&out.join("train_log.csv"), provenance(&hash) + &log.losses_csv())?;
    write_file(&out.join("train_timing.csv"), log.timing_csv())?;
    let report = evaluate(&cfg.model, trainer.best_params(), &test, cfg.data.eval_batch)?
        .report()
        .with_cost(&cost_report(&cfg.model)?);
    write_report(&out, "test_report", &report, &hash)?;
    println!(
        "best epoch {} of {}, val mse {:.6}",
        log.best_epoch.map_or("-".into(), |e| e.to_string()),
        log.epochs.len(),
        log.best_val().unwrap_or(f64::NAN)
    );
    println!("{}\n{}", MetricReport::CSV_HEADER, report.csv_row());
    println!("wrote {}", out.display());
    Ok(out)
}

/// Normalizes each epoch by its standard deviation, runs the model and
/// scales the estimate back.
pub fn denoise_epochs(cfg: &ModelConfig, params: &ModelParams<f32>, set: &EpochSet, batch: usize) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let mut scales = Vec::with_capacity(chunk.len());
        let mut ys = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let y = set.epoch_f64(i);
            let s = data::std_dev(&y);
            if s == 0.0 {
                return Err(Error::Degenerate(format!("epoch {i} is constant")));
            }
            ys.push(y.iter().map(|v| (v / s) as f32).collect::<Vec<f32>>());
            scales.push(s);
        }
        let est = predict(cfg, params, &ys, ys.len())?;
        out.extend(
            est.into_iter()
                .zip(scales)
                .map(|(x, s)| x.into_iter().map(|v| (v as f64 * s) as f32).collect()),
        );
    }
    Ok(out)
}

pub(crate) fn cmd_denoise(a: &DenoiseArgs) -> Result<()> {
    let (cfg, params) = load_model::<f32>(&a.model)?;
    let input = data::load_epochs(&a.input, None)?;
    if cfg.n != crate::EPOCH_LEN {
        return Err(Error::Config(format!(
            "model expects {}-sample epochs, input has {}",
            cfg.n,
            crate::EPOCH_LEN
        )));
    }
    let est = denoise_epochs(&cfg, &params, &input, 256)?;
    data::save_epochs(&a.output, &EpochSet::new(EpochKind::Clean, est)?)?;
    println!("denoised {} epochs into {}", input.len(), a.output.display());
    Ok(())
}

fn dump_pairs(out: &Path, test: &PairSet, n: usize, cfg: &ModelConfig, params: &ModelParams<f32>) -> Result<()> {
    let test = test.take(n);
    let f32s = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
    let clean: Vec<Vec<f32>> = (0..test.len()).map(|i| f32s(test.clean(i))).collect();
    let noisy: Vec<Vec<f32>> = (0..test.len()).map(|i| f32s(test.noisy(i))).collect();
    let noisy = EpochSet::new(test.artifact_set().kind(), noisy)?;
    let denoised = denoise_epochs(cfg, params, &noisy, 256)?;
    data::save_epochs(&out.join("test_clean.epk"), &EpochSet::new(EpochKind::Clean, clean)?)?;
    data::save_epochs(&out.join("test_noisy.epk"), &noisy)?;
    data::save_epochs(&out.join("test_denoised.epk"), &EpochSet::new(EpochKind::Clean, denoised)?)
}

/// Scores a checkpoint and the do-nothing estimator on the test split.
pub(crate) fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.run.load()?;
    let out = a.run.out_dir(&cfg)?;
    let path = a.model.clone().unwrap_or_else(|| out.join(MODEL_FILE));
    let (mcfg, params) = load_model::<f32>(&path)?;
    let test = cfg.data.pairs()?.subset(Split::Test);
    let range = (cfg.data.snr_min, cfg.data.snr_max);
    let model_eval = evaluate(&mcfg, &params, &test, cfg.data.eval_batch)?;
    let identity_eval = evaluate_identity(&test)?;
    let none = CostReport {
        params: 0,
        flops: 0,
        storage_bytes: 0,
    };
    let mut rows = table_rows(mcfg.kind.name(), Some(&model_eval), &cost_report(&mcfg)?, range);
    rows.extend(table_rows("identity", Some(&identity_eval), &none, range));
    let hash = cfg.hash();
    write_file(&out.join("eval.csv"), table_csv(&rows, &hash))?;
    write_file(&out.join("eval.json"), table_json(&rows, &hash)?)?;
    if let Some(n) = a.dump {
        dump_pairs(&out, &test, n, &mcfg, &params)?;
    }
    for (name, e) in [(mcfg.kind.name(), &model_eval), ("identity", &identity_eval)] {
        let r = e.report();
        println!(
            "{name:<10} rrmse_t {:.4}  rrmse_s {:.4}  cc {:.4}  ({} pairs)",
            r.rrmse_temporal, r.rrmse_spectral, r.cc, r.pairs
        );
    }
    println!("wrote {}", out.join("eval.csv").display());
    Ok(())
}
