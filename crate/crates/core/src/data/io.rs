//! Epoch files.
//!
//! EPK layout (little-endian):
//!
//! ```text
//! "EPK1"      4 bytes
//! kind        u8   (0 clean, 1 ocular, 2 muscle)
//! count       u32
//! length      u32  (must be 512)
//! samples     count × length × f32
//! ```
//!
//! CSV files hold one epoch per row, no header. Files ending in `.csv` are
//! read and written as CSV, everything else as EPK.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::checkpoint::{read_file, write_atomic};
use crate::EPOCH_LEN;

use super::{EpochKind, EpochSet};

pub const EPK_MAGIC: &[u8; 4] = b"EPK1";
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub(crate) fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn encode_epk(set: &EpochSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * EPOCH_LEN * set.len());
    out.extend_from_slice(EPK_MAGIC);
    out.push(set.kind().code());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(EPOCH_LEN as u32).to_le_bytes());
    for e in set.epochs() {
        for v in e {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes an EPK buffer. When `expect` is given the stored kind must match.
pub fn decode_epk(bytes: &[u8], expect: Option<EpochKind>) -> Result<EpochSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(0, "file shorter than the EPK header"));
    }
    if &bytes[..4] != EPK_MAGIC {
        return Err(Error::format(0, "bad magic, expected EPK1"));
    }
    let kind = EpochKind::from_code(bytes[4])
        .ok_or_else(|| Error::format(0, format!("unknown kind byte {}", bytes[4])))?;
    if let Some(want) = expect.filter(|&w| w != kind) {
        return Err(Error::format(0, format!("file holds {kind} epochs, expected {want}")));
    }
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
    let count = u32_at(5);
    let length = u32_at(9);
    if length != EPOCH_LEN {
        return Err(Error::format(0, format!("epoch length {length}, expected {EPOCH_LEN}")));
    }
    let body = &bytes[HEADER_LEN..];
    let stride = 4 * EPOCH_LEN;
    let complete = body.len() / stride;
    if complete < count {
        return Err(Error::format(complete, format!("file ends inside epoch {complete} of {count}")));
    }
    if body.len() != count * stride {
        return Err(Error::format(count, "trailing bytes after last epoch"));
    }
    let epochs = body
        .chunks_exact(stride)
        .map(|c| {
            c.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect()
        })
        .collect();
    EpochSet::new(kind, epochs)
}

/// Parses CSV text; errors carry the 0-based row index.
pub fn read_csv(text: &[u8], kind: EpochKind) -> Result<EpochSet> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let mut epochs = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(i, e.to_string()))?;
        let row: Vec<f32> = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f32>()
                    .map_err(|_| Error::format(i, format!("field {j} `{f}` is not a number")))
            })
            .collect::<Result<_>>()?;
        if row.len() != EPOCH_LEN {
            return Err(Error::format(
                i,
                format!("row {} has {} samples, expected {EPOCH_LEN}", i + 1, row.len()),
            ));
        }
        epochs.push(row);
    }
    EpochSet::new(kind, epochs)
}

pub fn write_csv(set: &EpochSet) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for e in set.epochs() {
        w.write_record(e.iter().map(|v| v.to_string()))
            .map_err(|e| Error::Contract(format!("csv write failed: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::Contract(format!("csv write failed: {e}")))
}

/// Loads EPK or CSV (by extension). CSV carries no kind, so `kind` (default
/// clean) is attached; for EPK a given `kind` must match the file.
pub fn load_epochs(path: &Path, kind: Option<EpochKind>) -> Result<EpochSet> {
    let bytes = read_file(path)?;
    if is_csv(path) {
        read_csv(&bytes, kind.unwrap_or(EpochKind::Clean))
    } else {
        decode_epk(&bytes, kind)
    }
}

pub fn save_epochs(path: &Path, set: &EpochSet) -> Result<()> {
    let bytes = if is_csv(path) { write_csv(set)? } else { encode_epk(set) };
    write_atomic(path, &bytes)
}
