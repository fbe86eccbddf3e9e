//! `EDN1` binary container.
//!
//! ```text
//! "EDN1"            4 bytes
//! version           u32
//! meta_len          u32, then meta_len bytes of UTF-8 `key=value` lines
//! record_count      u32
//! record × count:
//!   name_len        u32, then name bytes
//!   ndim            u32, then ndim × u32 dims
//!   values          product(dims) × f32
//! ```
//!
//! All integers and floats are little-endian. Model checkpoints store the
//! model config in the meta block and one record per parameter; buffers are
//! stored under a `buffer/` prefix.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

use super::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 4] = b"EDN1";
pub const VERSION: u32 = 1;
const BUFFER_PREFIX: &str = "buffer/";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    pub records: Vec<Record>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    record: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.record, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, n: usize) -> Result<String> {
        let record = self.record;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format(record, "invalid UTF-8"))
    }
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize);
        let meta = self.meta_text();
        put_u32(&mut out, meta.len());
        out.extend_from_slice(meta.as_bytes());
        put_u32(&mut out, self.records.len());
        for r in &self.records {
            put_u32(&mut out, r.name.len());
            out.extend_from_slice(r.name.as_bytes());
            put_u32(&mut out, r.shape.len());
            for &d in &r.shape {
                put_u32(&mut out, d);
            }
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn meta_text(&self) -> String {
        self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Exact size of [`Container::encode`]'s output.
    pub fn encoded_len(&self) -> usize {
        let header = 4 + 4 + 4 + self.meta_text().len() + 4;
        let records: usize = self
            .records
            .iter()
            .map(|r| 4 + r.name.len() + 4 + 4 * r.shape.len() + 4 * r.values.len())
            .sum();
        header + records
    }

    /// Errors carry the index of the record being read; header problems
    /// report index 0.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0, record: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::format(0, "bad magic, expected EDN1"));
        }
        let version = rd.u32()?;
        if version != VERSION as usize {
            return Err(Error::format(0, format!("unsupported version {version}")));
        }
        let meta_len = rd.u32()?;
        let text = rd.string(meta_len)?;
        let mut meta = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(0, format!("malformed meta line `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = rd.u32()?;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            rd.record = i;
            let name_len = rd.u32()?;
            let name = rd.string(name_len)?;
            let ndim = rd.u32()?;
            let shape = (0..ndim).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l <= bytes.len() / 4)
                .ok_or_else(|| Error::format(i, "record shape exceeds file size"))?;
            let raw = rd.take(4 * len)?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(i, format!("non-finite value in `{name}`")));
            }
            records.push(Record { name, shape, values });
        }
        if rd.pos != bytes.len() {
            return Err(Error::format(count, "trailing bytes after last record"));
        }
        Ok(Container { meta, records })
    }

    pub fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Writes to a sibling temporary file and renames it over `path`.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Container::decode(&read_file(path)?)
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn tensor_record<T: Scalar>(name: String, t: &Tensor<T>) -> Record {
    Record {
        name,
        shape: t.shape().to_vec(),
        values: t.data().iter().map(|v| v.as_f64() as f32).collect(),
    }
}

pub(crate) fn record_tensor<T: Scalar>(r: &Record) -> Result<Tensor<T>> {
    let data = r.values.iter().map(|&v| T::from_f64_lossy(f64::from(v))).collect();
    Tensor::new(r.shape.clone(), data)
}

/// Records for every parameter and buffer, with names prefixed by `prefix`.
pub(crate) fn params_records<T: Scalar>(params: &ModelParams<T>, prefix: &str) -> Vec<Record> {
    let mut out: Vec<Record> = params
        .iter()
        .map(|(name, t)| tensor_record(format!("{prefix}{name}"), t))
        .collect();
    out.extend(
        params
            .buffers()
            .map(|(name, t)| tensor_record(format!("{prefix}{BUFFER_PREFIX}{name}"), t)),
    );
    out
}

/// Rebuilds parameters from the records under `prefix`, checking them
/// against a freshly shaped template.
pub(crate) fn params_from_records<T: Scalar>(
    c: &Container,
    prefix: &str,
    template: &ModelParams<T>,
) -> Result<ModelParams<T>> {
    let mut params = ModelParams::new();
    let find = |name: &str| -> Result<(usize, &Record)> {
        c.records
            .iter()
            .enumerate()
            .find(|(_, r)| r.name == name)
            .ok_or_else(|| Error::format(c.records.len(), format!("missing record `{name}`")))
    };
    for (name, t) in template.iter() {
        let (i, r) = find(&format!("{prefix}{name}"))?;
        if r.shape != t.shape() {
            return Err(Error::format(i, format!("`{name}` has shape {:?}, expected {:?}", r.shape, t.shape())));
        }
        params.insert(name.clone(), record_tensor(r)?);
    }
    for (name, t) in template.buffers() {
        let (i, r) = find(&format!("{prefix}{BUFFER_PREFIX}{name}"))?;
        if r.shape != t.shape() {
            return Err(Error::format(i, format!("buffer `{name}` has wrong shape {:?}", r.shape)));
        }
        params.insert_buffer(name.clone(), record_tensor(r)?);
    }
    Ok(params)
}

pub(crate) fn config_meta(cfg: &ModelConfig) -> BTreeMap<String, String> {
    cfg.to_pairs()
        .into_iter()
        .map(|(k, v)| (format!("model.{k}"), v))
        .collect()
}

pub(crate) fn config_from_meta(meta: &BTreeMap<String, String>) -> Result<ModelConfig> {
    let pairs: BTreeMap<String, String> = meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("model.").map(|k| (k.to_string(), v.clone())))
        .collect();
    if !pairs.contains_key("kind") {
        return Err(Error::format(0, "checkpoint has no model config"));
    }
    ModelConfig::from_pairs(&pairs).map_err(|e| Error::format(0, format!("bad model config: {e}")))
}

pub fn model_container<T: Scalar>(cfg: &ModelConfig, params: &ModelParams<T>) -> Container {
    Container {
        meta: config_meta(cfg),
        records: params_records(params, ""),
    }
}

pub fn model_from_container<T: Scalar>(c: &Container) -> Result<(ModelConfig, ModelParams<T>)> {
    let cfg = config_from_meta(&c.meta)?;
    let template = super::init_params::<T>(&cfg, &mut crate::numerics::Rng::new(0))?;
    Ok((cfg.clone(), params_from_records(c, "", &template)?))
}

pub fn save_model<T: Scalar>(path: &Path, cfg: &ModelConfig, params: &ModelParams<T>) -> Result<()> {
    model_container(cfg, params).write_atomic(path)
}

/// Reads a model checkpoint; training checkpoints load too, since they
/// carry the same records plus optimizer state.
pub fn load_model<T: Scalar>(path: &Path) -> Result<(ModelConfig, ModelParams<T>)> {
    model_from_container(&Container::read(path)?)
}

/// Size in bytes of the params-only checkpoint for `params`.
pub fn encoded_size<T: Scalar>(cfg: &ModelConfig, params: &ModelParams<T>) -> usize {
    model_container(cfg, params).encoded_len()
}
