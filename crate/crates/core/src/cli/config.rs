use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{self, EpochKind, PairSet, AUGMENT_TIMES, SNR_RANGE, SPLIT_RATIOS};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::Rng;
use crate::training::TrainConfig;
use crate::EPOCH_LEN;

const MODEL_KEYS: &[&str] = &[
    "kind",
    "n",
    "k",
    "q",
    "depths",
    "heads",
    "ff_hidden",
    "dropout_p",
    "dln_hidden",
    "scnn_channels",
    "scnn_layers",
    "rescnn_channels",
    "rnn_hidden",
    "rnn_fc",
];
const TRAIN_KEYS: &[&str] = &[
    "max_epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "patience",
    "min_delta",
    "seed",
];
const DATA_KEYS: &[&str] = &[
    "clean",
    "artifact",
    "artifact_kind",
    "synth_count",
    "augment_times",
    "snr_min",
    "snr_max",
    "data_seed",
    "eval_batch",
];

/// Where the epochs come from and how they are mixed and split.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub clean: Option<PathBuf>,
    pub artifact: Option<PathBuf>,
    pub artifact_kind: EpochKind,
    /// When non-zero, generate this many clean and artifact epochs instead of
    /// reading files.
    pub synth_count: usize,
    pub augment_times: usize,
    pub snr_min: f64,
    pub snr_max: f64,
    pub data_seed: u64,
    pub eval_batch: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            clean: None,
            artifact: None,
            artifact_kind: EpochKind::Ocular,
            synth_count: 0,
            augment_times: AUGMENT_TIMES,
            snr_min: SNR_RANGE.0,
            snr_max: SNR_RANGE.1,
            data_seed: 0,
            eval_batch: 256,
        }
    }
}

impl DataConfig {
    fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        vec![
            ("clean".into(), path(&self.clean)),
            ("artifact".into(), path(&self.artifact)),
            ("artifact_kind".into(), self.artifact_kind.name().into()),
            ("synth_count".into(), self.synth_count.to_string()),
            ("augment_times".into(), self.augment_times.to_string()),
            ("snr_min".into(), format!("{:?}", self.snr_min)),
            ("snr_max".into(), format!("{:?}", self.snr_max)),
            ("data_seed".into(), self.data_seed.to_string()),
            ("eval_batch".into(), self.eval_batch.to_string()),
        ]
    }

    fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        let path = |v: &str| (!v.trim().is_empty()).then(|| PathBuf::from(v.trim()));
        for (key, val) in pairs {
            match key.as_str() {
                "clean" => self.clean = path(val),
                "artifact" => self.artifact = path(val),
                "artifact_kind" => self.artifact_kind = val.trim().parse()?,
                "synth_count" => self.synth_count = num(key, val)?,
                "augment_times" => self.augment_times = num(key, val)?,
                "snr_min" => self.snr_min = num(key, val)?,
                "snr_max" => self.snr_max = num(key, val)?,
                "data_seed" => self.data_seed = num(key, val)?,
                "eval_batch" => self.eval_batch = num(key, val)?,
                _ => {}
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.artifact_kind == EpochKind::Clean {
            return Err(Error::Config("artifact_kind must be ocular or muscle".into()));
        }
        if self.augment_times == 0 || self.eval_batch == 0 {
            return Err(Error::Config("augment_times and eval_batch must be at least 1".into()));
        }
        if !(self.snr_min <= self.snr_max) {
            return Err(Error::Config(format!(
                "snr_min {} exceeds snr_max {}",
                self.snr_min, self.snr_max
            )));
        }
        if self.synth_count == 0 {
            for (key, p) in [("clean", &self.clean), ("artifact", &self.artifact)] {
                match p {
                    None => {
                        return Err(Error::Config(format!(
                            "`{key}` is required unless synth_count is set"
                        )))
                    }
                    Some(p) if !p.exists() => return Err(Error::MissingPath(p.clone())),
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Loads or generates the epochs, augments them and tags the split.
    pub fn pairs(&self) -> Result<PairSet> {
        let mut rng = Rng::new(self.data_seed);
        let (clean, artifact) = if self.synth_count > 0 {
            data::synth_generate(self.synth_count, self.artifact_kind, &mut rng)?
        } else {
            let load = |p: &Option<PathBuf>, kind| data::load_epochs(p.as_deref().expect("validated"), Some(kind));
            (load(&self.clean, EpochKind::Clean)?, load(&self.artifact, self.artifact_kind)?)
        };
        let pairs = data::augment(
            &clean,
            &artifact,
            self.augment_times,
            (self.snr_min, self.snr_max),
            &mut rng,
        )?;
        data::split(&pairs, SPLIT_RATIOS, &mut rng)
    }
}

/// A resolved run: model, training and data settings plus an optional output
/// directory, read from a flat `key = value` file with command-line
/// overrides applied on top.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            out_dir: None,
        }
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// skipped; a repeated key keeps the last value.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Reads `path` (if any) and applies `overrides` of the form `key=value`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::MissingPath(p.to_path_buf()),
                    _ => Error::io(p, e),
                })?;
                parse_pairs(&text)?
            }
            None => BTreeMap::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            pairs.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| {
            let k = k.as_str();
            k != "out_dir" && !MODEL_KEYS.contains(&k) && !TRAIN_KEYS.contains(&k) && !DATA_KEYS.contains(&k)
        }) {
            return Err(Error::Config(format!("unknown configuration key `{k}`")));
        }
        let mut cfg = RunConfig::default();
        // Changing the segmentation without an explicit width keeps the
        // feed-forward block at 2q.
        if !pairs.contains_key("ff_hidden") {
            if let Some(q) = pairs.get("q") {
                let mut with = pairs.clone();
                let q: usize = q
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid value `{q}` for `q`")))?;
                with.insert("ff_hidden".into(), (2 * q).to_string());
                cfg.model.apply_pairs(&with)?;
            } else {
                cfg.model.apply_pairs(pairs)?;
            }
        } else {
            cfg.model.apply_pairs(pairs)?;
        }
        cfg.train.apply_pairs(pairs)?;
        cfg.data.apply_pairs(pairs)?;
        cfg.out_dir = pairs.get("out_dir").filter(|v| !v.is_empty()).map(PathBuf::from);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.n != EPOCH_LEN {
            return Err(Error::Config(format!(
                "n must be {EPOCH_LEN} to match the epoch length, got {}",
                self.model.n
            )));
        }
        self.train.validate()?;
        self.data.validate()
    }

    /// Every setting that affects results, one `key=value` per line in a
    /// fixed order. The output directory is excluded.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in self
            .model
            .to_pairs()
            .into_iter()
            .chain(self.train.to_pairs())
            .chain(self.data.to_pairs())
        {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(extra: &[(&str, &str)]) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = [("synth_count", "4")]
            .iter()
            .chain(extra)
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        m.entry("kind".into()).or_insert("eegdnet".into());
        m
    }

    #[test]
    fn parses_comments_and_last_value_wins() {
        let m = parse_pairs("# top\nlr = 1e-3 # inline\n\nlr=2e-3\nkind = dln\n").unwrap();
        assert_eq!(m["lr"], "2e-3");
        assert_eq!(m["kind"], "dln");
        assert!(matches!(parse_pairs("oops"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_pairs(&synth(&[("learning_rate", "1")])).unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn changing_q_moves_the_feed_forward_width() {
        let c = RunConfig::from_pairs(&synth(&[("k", "16"), ("q", "32")])).unwrap();
        assert_eq!(c.model.ff_hidden, 64);
        let c = RunConfig::from_pairs(&synth(&[("k", "16"), ("q", "32"), ("ff_hidden", "10")])).unwrap();
        assert_eq!(c.model.ff_hidden, 10);
    }

    #[test]
    fn kq_must_cover_the_epoch() {
        let err = RunConfig::from_pairs(&synth(&[("k", "16"), ("q", "16")])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn missing_data_file_is_named() {
        let mut m = synth(&[("clean", "/nonexistent/clean.epk"), ("artifact", "/nonexistent/a.epk")]);
        m.insert("synth_count".into(), "0".into());
        match RunConfig::from_pairs(&m) {
            Err(Error::MissingPath(p)) => assert_eq!(p, PathBuf::from("/nonexistent/clean.epk")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_ignores_out_dir_but_not_settings() {
        let a = RunConfig::from_pairs(&synth(&[])).unwrap();
        let b = RunConfig::from_pairs(&synth(&[("out_dir", "elsewhere")])).unwrap();
        let c = RunConfig::from_pairs(&synth(&[("seed", "1")])).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn canonical_text_reloads_to_the_same_config() {
        let a = RunConfig::from_pairs(&synth(&[("lr", "0.001"), ("artifact_kind", "muscle")])).unwrap();
        let b = RunConfig::from_pairs(&parse_pairs(&a.canonical()).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
