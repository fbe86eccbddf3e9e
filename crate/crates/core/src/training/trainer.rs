use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use crate::data::PairSet;
use crate::error::{Error, Result};
use crate::model::checkpoint::{
    config_from_meta, config_meta, params_from_records, params_records, record_tensor, tensor_record, Container,
};
use crate::model::{forward, init_params, ForwardCtx, ModelConfig, ModelParams, BATCH_NORM_MOMENTUM};
use crate::numerics::{Rng, Scalar, Tape, Tensor};

use super::adam::{adam_step, AdamState};
use super::TrainConfig;

/// RNG stream used for parameter initialization; epoch `e` uses stream
/// `e + 1`.
const INIT_STREAM: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Wall time of the epoch; not stored in checkpoints.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn best_val(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_mse)
    }

    /// `epoch,train_mse,val_mse`, values printed so that they round-trip.
    pub fn losses_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{:?},{:?}\n", r.epoch, r.train_mse, r.val_mse));
        }
        s
    }

    /// `epoch,seconds`.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{:.6}\n", r.epoch, r.seconds));
        }
        s
    }
}

/// Stacks the normalized pairs `idx` into `[B × N]` noisy and clean tensors.
pub fn batch_tensors<T: Scalar>(pairs: &PairSet, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let n = crate::EPOCH_LEN;
    let mut ys = Vec::with_capacity(idx.len() * n);
    let mut xs = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        let (y, x) = pairs.normalized(i);
        ys.extend(y.into_iter().map(T::from_f64_lossy));
        xs.extend(x.into_iter().map(T::from_f64_lossy));
    }
    Ok((Tensor::new(vec![idx.len(), n], ys)?, Tensor::new(vec![idx.len(), n], xs)?))
}

/// Mean squared error over all samples of `pairs` in eval mode, on
/// normalized amplitudes.
pub fn validation_mse<T: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    pairs: &PairSet,
    batch: usize,
) -> Result<f64> {
    let order: Vec<usize> = (0..pairs.len()).collect();
    let mut total = 0.0;
    for chunk in order.chunks(batch.max(1)) {
        let (y, x) = batch_tensors::<T>(pairs, chunk)?;
        let xhat = crate::model::forward_eval(cfg, params, &y)?;
        total += xhat
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum::<f64>();
    }
    Ok(total / (pairs.len() * crate::EPOCH_LEN) as f64)
}

/// Mini-batch Adam on the MSE loss with early stopping on validation MSE.
///
/// Each epoch reshuffles the training pairs with its own seeded stream, so
/// a run resumed from a checkpoint continues exactly as the uninterrupted
/// run would.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    model: ModelConfig,
    config: TrainConfig,
    params: ModelParams<T>,
    best: ModelParams<T>,
    adam: AdamState<T>,
    log: TrainLog,
    stale: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: ModelConfig, config: TrainConfig) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        let params = init_params::<T>(&model, &mut Rng::stream(config.seed, INIT_STREAM))?;
        let adam = AdamState::new(&params, config.lr, config.beta1, config.beta2, config.eps);
        Ok(Trainer {
            best: params.clone(),
            model,
            config,
            params,
            adam,
            log: TrainLog::default(),
            stale: 0,
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// For warm starts; takes effect from the next step.
    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    /// Parameters of the epoch with the lowest validation MSE so far.
    pub fn best_params(&self) -> &ModelParams<T> {
        &self.best
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.log.epochs.len()
    }

    pub fn is_finished(&self) -> bool {
        self.epoch() >= self.config.max_epochs || self.stale >= self.config.patience
    }

    /// Lets a resumed run go on with a larger budget.
    pub fn set_max_epochs(&mut self, max_epochs: usize) {
        self.config.max_epochs = max_epochs;
    }

    /// One pass over the shuffled training pairs followed by validation.
    ///
    /// On a non-finite loss or gradient the parameters and optimizer state
    /// are restored to the start of the epoch and the error is returned.
    pub fn run_epoch(&mut self, train: &PairSet, val: &PairSet) -> Result<EpochRecord> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Degenerate("training and validation splits must be non-empty".into()));
        }
        let epoch = self.epoch();
        let start = Instant::now();
        let snapshot = (self.params.clone(), self.adam.clone());
        let result = self.train_pass(train, epoch).and_then(|train_mse| {
            let val_mse = validation_mse(&self.model, &self.params, val, self.config.batch_size)?;
            if !val_mse.is_finite() {
                return Err(Error::NonFinite("validation loss"));
            }
            Ok((train_mse, val_mse))
        });
        let (train_mse, val_mse) = match result {
            Ok(v) => v,
            Err(e) => {
                (self.params, self.adam) = snapshot;
                return Err(match e {
                    Error::NonFinite(what) => Error::Diverged {
                        epoch,
                        detail: format!("non-finite value in {what}"),
                    },
                    other => other,
                });
            }
        };
        let best = self.log.best_val();
        if best.is_none_or(|b| val_mse < b) {
            self.best = self.params.clone();
            self.log.best_epoch = Some(epoch);
        }
        if best.is_none_or(|b| val_mse < b - self.config.min_delta) {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let rec = EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.log.epochs.push(rec);
        Ok(rec)
    }

    fn train_pass(&mut self, train: &PairSet, epoch: usize) -> Result<f64> {
        let mut rng = Rng::stream(self.config.seed, epoch as u64 + 1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let loss = self.step(train, chunk, &mut rng)?;
            total += loss * chunk.len() as f64;
        }
        Ok(total / train.len() as f64)
    }

    /// One optimizer step on the pairs `idx`; returns the batch loss.
    pub fn step(&mut self, pairs: &PairSet, idx: &[usize], rng: &mut Rng) -> Result<f64> {
        let (y, x) = batch_tensors::<T>(pairs, idx)?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let yv = tape.constant(y);
        let xv = tape.constant(x);
        let mut ctx = ForwardCtx::train(rng);
        let out = forward(&mut tape, &self.model, &self.params, &bound, yv, &mut ctx)?;
        let loss = tape.mse(out, xv)?;
        let stats = ctx.take_stats();
        let value = tape.data(loss)[0].as_f64();
        tape.backward(loss)?;
        self.params.zero_grads();
        self.params.accumulate_grads(&tape, &bound)?;
        adam_step(&mut self.params, &mut self.adam)?;
        self.params.zero_grads();
        self.params.update_running_stats(&stats, BATCH_NORM_MOMENTUM)?;
        Ok(value)
    }

    /// Runs epochs until `max_epochs` or patience runs out, calling
    /// `on_epoch` after each one.
    pub fn train(
        &mut self,
        train: &PairSet,
        val: &PairSet,
        mut on_epoch: impl FnMut(&EpochRecord, &Self) -> Result<()>,
    ) -> Result<()> {
        while !self.is_finished() {
            let rec = self.run_epoch(train, val)?;
            on_epoch(&rec, self)?;
        }
        Ok(())
    }

    /// Full training state: best parameters (readable as a plain model
    /// checkpoint), current parameters, Adam moments, log and configs.
    pub fn to_container(&self) -> Container {
        let mut meta = config_meta(&self.model);
        for (k, v) in self.config.to_pairs() {
            meta.insert(format!("train.{k}"), v);
        }
        meta.insert("state.adam_t".into(), self.adam.t.to_string());
        meta.insert("state.stale".into(), self.stale.to_string());
        meta.insert(
            "state.best_epoch".into(),
            self.log.best_epoch.map_or("none".into(), |e| e.to_string()),
        );
        meta.insert("state.epochs".into(), self.log.epochs.len().to_string());
        for r in &self.log.epochs {
            meta.insert(format!("log.{:06}", r.epoch), format!("{:?},{:?}", r.train_mse, r.val_mse));
        }
        let mut records = params_records(&self.best, "");
        records.extend(params_records(&self.params, "current/"));
        for (name, m) in &self.adam.m {
            let shape = self.params.get(name).map(|t| t.shape().to_vec()).unwrap_or(vec![m.len()]);
            let t = |v: &Vec<T>| Tensor::new(shape.clone(), v.clone()).expect("finite moments");
            records.push(tensor_record(format!("adam.m/{name}"), &t(m)));
            records.push(tensor_record(format!("adam.v/{name}"), &t(&self.adam.v[name])));
        }
        Container { meta, records }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let model = config_from_meta(&c.meta)?;
        let train_pairs: BTreeMap<String, String> = c
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("train.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let mut config = TrainConfig::default();
        config.apply_pairs(&train_pairs).map_err(|e| Error::format(0, e.to_string()))?;
        let mut trainer = Trainer::<T>::new(model, config)?;
        let get = |key: &str| -> Result<&String> {
            c.meta
                .get(key)
                .ok_or_else(|| Error::format(0, format!("training checkpoint lacks `{key}`")))
        };
        let parse = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::format(0, format!("bad value for `{key}`")))
        };
        trainer.best = params_from_records(c, "", &trainer.params)?;
        trainer.params = params_from_records(c, "current/", &trainer.params)?;
        trainer.adam.t = parse("state.adam_t")? as u64;
        trainer.stale = parse("state.stale")?;
        for (i, r) in c.records.iter().enumerate() {
            let (which, name) = match (r.name.strip_prefix("adam.m/"), r.name.strip_prefix("adam.v/")) {
                (Some(n), _) => (&mut trainer.adam.m, n),
                (_, Some(n)) => (&mut trainer.adam.v, n),
                _ => continue,
            };
            let slot = which
                .get_mut(name)
                .ok_or_else(|| Error::format(i, format!("Adam state for unknown parameter `{name}`")))?;
            let values = record_tensor::<T>(r)?.into_data();
            if values.len() != slot.len() {
                return Err(Error::format(i, format!("Adam state for `{name}` has the wrong size")));
            }
            *slot = values;
        }
        let epochs = parse("state.epochs")?;
        for e in 0..epochs {
            let line = get(&format!("log.{e:06}"))?;
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::format(0, format!("bad log line for epoch {e}")))?;
            let f = |s: &str| s.parse::<f64>().map_err(|_| Error::format(0, format!("bad log value `{s}`")));
            trainer.log.epochs.push(EpochRecord {
                epoch: e,
                train_mse: f(a)?,
                val_mse: f(b)?,
                seconds: 0.0,
            });
        }
        let best = get("state.best_epoch")?;
        trainer.log.best_epoch = match best.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| Error::format(0, "bad best epoch"))?),
        };
        if trainer.log.best_epoch.is_some_and(|b| b >= epochs) {
            return Err(Error::format(0, "best epoch beyond logged epochs"));
        }
        Ok(trainer)
    }

    /// Atomic write of the full training state.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.to_container().write_atomic(path)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Trainer::from_container(&Container::read(path)?)
    }
}

/// Trains from scratch and returns the best parameters and the log.
pub fn train<T: Scalar>(
    model: &ModelConfig,
    train: &PairSet,
    val: &PairSet,
    config: &TrainConfig,
) -> Result<(ModelParams<T>, TrainLog)> {
    let mut t = Trainer::<T>::new(model.clone(), config.clone())?;
    t.train(train, val, |_, _| Ok(()))?;
    Ok((t.best.clone(), t.log.clone()))
}
