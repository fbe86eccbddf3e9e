use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::EPOCH_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "eegdnet")]
    EegDnet,
    #[serde(rename = "dln")]
    Dln,
    #[serde(rename = "scnn")]
    Scnn,
    #[serde(rename = "rescnn1d")]
    ResCnn1d,
    #[serde(rename = "rnn")]
    Rnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::EegDnet,
        ModelKind::Dln,
        ModelKind::Scnn,
        ModelKind::ResCnn1d,
        ModelKind::Rnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::EegDnet => "eegdnet",
            ModelKind::Dln => "dln",
            ModelKind::Scnn => "scnn",
            ModelKind::ResCnn1d => "rescnn1d",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eegdnet" => Ok(ModelKind::EegDnet),
            "dln" => Ok(ModelKind::Dln),
            "scnn" => Ok(ModelKind::Scnn),
            "rescnn1d" | "rescnn" | "1d-rescnn" => Ok(ModelKind::ResCnn1d),
            "rnn" | "lstm" => Ok(ModelKind::Rnn),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Architecture hyperparameters for every model kind. Fields that do not
/// apply to the selected `kind` are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Epoch length in samples.
    pub n: usize,
    /// Segment count.
    pub k: usize,
    /// Segment width.
    pub q: usize,
    pub depths: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub dropout_p: f64,
    pub dln_hidden: usize,
    pub scnn_channels: usize,
    pub scnn_layers: usize,
    pub rescnn_channels: usize,
    pub rnn_hidden: usize,
    pub rnn_fc: usize,
}

/// Kernel widths of the three parallel 1D-ResCNN branches.
pub const RESCNN_KERNELS: [usize; 3] = [3, 5, 7];
/// Kernel width of every SCNN convolution.
pub const SCNN_KERNEL: usize = 3;

impl Default for ModelConfig {
    fn default() -> Self {
        Self::eegdnet(8, 64, 6, 1)
    }
}

impl ModelConfig {
    /// Encoder with `k × q` segmentation of a 512-sample epoch and
    /// feed-forward width `2q`.
    pub fn eegdnet(k: usize, q: usize, depths: usize, heads: usize) -> Self {
        ModelConfig {
            kind: ModelKind::EegDnet,
            n: k * q,
            k,
            q,
            depths,
            heads,
            ff_hidden: 2 * q,
            dropout_p: 0.1,
            dln_hidden: EPOCH_LEN,
            scnn_channels: 64,
            scnn_layers: 4,
            rescnn_channels: 32,
            rnn_hidden: 1,
            rnn_fc: EPOCH_LEN,
        }
    }

    /// Full-size configuration of a given kind on 512-sample epochs.
    pub fn baseline(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            ..Self::default()
        }
    }

    /// Small configurations used for gradient checks.
    pub fn tiny(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            n: 16,
            k: 4,
            q: 4,
            depths: 2,
            heads: 2,
            ff_hidden: 6,
            dropout_p: 0.1,
            dln_hidden: 6,
            scnn_channels: 3,
            scnn_layers: 4,
            rescnn_channels: 2,
            rnn_hidden: 2,
            rnn_fc: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("depths", self.depths),
            ("heads", self.heads),
            ("ff_hidden", self.ff_hidden),
            ("dln_hidden", self.dln_hidden),
            ("scnn_channels", self.scnn_channels),
            ("scnn_layers", self.scnn_layers),
            ("rescnn_channels", self.rescnn_channels),
            ("rnn_hidden", self.rnn_hidden),
            ("rnn_fc", self.rnn_fc),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.kind == ModelKind::EegDnet && self.k * self.q != self.n {
            return Err(Error::Dimension(format!(
                "k × q must equal N: {} × {} != {}",
                self.k, self.q, self.n
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Parameter(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Canonical `key=value` pairs, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![("kind".to_string(), self.kind.name().to_string())];
        let nums = [
            ("n", self.n),
            ("k", self.k),
            ("q", self.q),
            ("depths", self.depths),
            ("heads", self.heads),
            ("ff_hidden", self.ff_hidden),
        ];
        v.extend(nums.iter().map(|(k, x)| (k.to_string(), x.to_string())));
        v.push(("dropout_p".into(), format!("{:?}", self.dropout_p)));
        let nums = [
            ("dln_hidden", self.dln_hidden),
            ("scnn_channels", self.scnn_channels),
            ("scnn_layers", self.scnn_layers),
            ("rescnn_channels", self.rescnn_channels),
            ("rnn_hidden", self.rnn_hidden),
            ("rnn_fc", self.rnn_fc),
        ];
        v.extend(nums.iter().map(|(k, x)| (k.to_string(), x.to_string())));
        v
    }

    /// Applies any recognised keys from `pairs` on top of `self`. Unknown keys
    /// are left for the caller.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        for (key, val) in pairs {
            match key.as_str() {
                "kind" => self.kind = val.trim().parse()?,
                "n" => self.n = num(key, val)?,
                "k" => self.k = num(key, val)?,
                "q" => self.q = num(key, val)?,
                "depths" => self.depths = num(key, val)?,
                "heads" => self.heads = num(key, val)?,
                "ff_hidden" => self.ff_hidden = num(key, val)?,
                "dropout_p" => self.dropout_p = num(key, val)?,
                "dln_hidden" => self.dln_hidden = num(key, val)?,
                "scnn_channels" => self.scnn_channels = num(key, val)?,
                "scnn_layers" => self.scnn_layers = num(key, val)?,
                "rescnn_channels" => self.rescnn_channels = num(key, val)?,
                "rnn_hidden" => self.rnn_hidden = num(key, val)?,
                "rnn_fc" => self.rnn_fc = num(key, val)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply_pairs(pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_kq_not_matching_n() {
        let mut c = ModelConfig::eegdnet(8, 64, 6, 1);
        assert!(c.validate().is_ok());
        c.q = 32;
        assert!(matches!(c.validate(), Err(Error::Dimension(_))));
    }

    #[test]
    fn pairs_round_trip() {
        let mut c = ModelConfig::tiny(ModelKind::Rnn);
        c.dropout_p = 0.3;
        let map: BTreeMap<_, _> = c.to_pairs().into_iter().collect();
        assert_eq!(ModelConfig::from_pairs(&map).unwrap(), c);
    }

    #[test]
    fn kind_names_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("transformer".parse::<ModelKind>().is_err());
    }
}
