//! Versioned binary model container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `SBDMODEL` |
//! | 4 | format version (`u32`, currently 1) |
//! | 4 | dimension-table length `n` in bytes (`u32`) |
//! | n | dimension table |
//! | 4 | CRC-32 of the dimension table |
//! | 8 | payload value count `m` (`u64`) |
//! | 8·m | payload, `f64` values |
//! | 4 | CRC-32 of the payload bytes |
//!
//! The dimension table holds `u32` fields: input channels, kernel size,
//! convolutions per stage, stage count `K`, the `K` stage widths, scale
//! count `S`; then `S` scale factors as `f64`; then `S·K` learnable-upsampling
//! flags as single bytes. The payload lists every parameter group in
//! [`ModelParams::all_groups`] order.

use std::path::Path;

use super::model::{Architecture, ModelParams};
use crate::{Error, FormatError, Result};

pub const MAGIC: &[u8; 8] = b"SBDMODEL";
pub const VERSION: u32 = 1;
/// Upper bound on any table entry, guarding allocation on corrupt input.
const MAX_DIM: u32 = 1 << 16;

pub fn encode(model: &ModelParams) -> Vec<u8> {
    let arch = model.architecture();
    let mut table = Vec::new();
    for v in [arch.in_channels, arch.kernel, arch.convs_per_stage, arch.stages()] {
        table.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &w in &arch.widths {
        table.extend_from_slice(&(w as u32).to_le_bytes());
    }
    table.extend_from_slice(&(arch.scales.len() as u32).to_le_bytes());
    for &s in &arch.scales {
        table.extend_from_slice(&s.to_le_bytes());
    }
    for branch in &model.branches {
        for head in &branch.heads {
            table.push(head.learnable_up as u8);
        }
    }

    let mut payload = Vec::new();
    let mut count: u64 = 0;
    for g in model.all_groups() {
        for s in model.group(g) {
            for v in s {
                payload.extend_from_slice(&v.to_le_bytes());
                count += 1;
            }
        }
    }

    let mut out = Vec::with_capacity(32 + table.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    out.extend_from_slice(&table);
    out.extend_from_slice(&crc32fast::hash(&table).to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> std::result::Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::Truncated {
                offset: self.bytes.len() as u64,
                section: section.into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }
}

fn dim(r: &mut Reader, name: &str) -> std::result::Result<usize, FormatError> {
    let offset = r.pos as u64;
    let v = r.u32("dimension table")?;
    if v == 0 || v > MAX_DIM {
        return Err(FormatError::DimensionOverflow {
            offset,
            detail: format!("{name} = {v} outside 1..={MAX_DIM}"),
        });
    }
    Ok(v as usize)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ModelParams, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(FormatError::MalformedHeader {
            offset: 0,
            detail: "bad magic, not a model checkpoint".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Unsupported {
            offset: 8,
            detail: format!("format version {version}, expected {VERSION}"),
        });
    }
    let table_len = r.u32("dimension table length")? as usize;
    let table_offset = r.pos as u64;
    let table = r.take(table_len, "dimension table")?;
    let crc_offset = r.pos as u64;
    if r.u32("dimension table checksum")? != crc32fast::hash(table) {
        return Err(FormatError::ChecksumMismatch {
            offset: crc_offset,
            section: "dimension table".into(),
        });
    }

    let mut t = Reader { bytes: table, pos: 0 };
    let rebase = |e: FormatError| match e {
        FormatError::Truncated { offset, .. } => FormatError::MalformedHeader {
            offset: table_offset + offset,
            detail: "dimension table shorter than its contents".into(),
        },
        FormatError::DimensionOverflow { offset, detail } => FormatError::DimensionOverflow {
            offset: table_offset + offset,
            detail,
        },
        other => other,
    };
    let (arch, flags) = (|| {
        let in_channels = dim(&mut t, "input channels")?;
        let kernel = dim(&mut t, "kernel")?;
        let convs_per_stage = dim(&mut t, "convolutions per stage")?;
        let stages = dim(&mut t, "stage count")?;
        let widths = (0..stages).map(|_| dim(&mut t, "stage width")).collect::<std::result::Result<Vec<_>, _>>()?;
        let n_scales = dim(&mut t, "scale count")?;
        let scales = (0..n_scales)
            .map(|_| t.take(8, "scales").map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let flags = t.take(n_scales * stages, "flags")?.to_vec();
        let arch = Architecture {
            in_channels,
            widths,
            convs_per_stage,
            kernel,
            scales,
        };
        Ok((arch, flags))
    })()
    .map_err(rebase)?;
    if t.pos != table.len() || flags.iter().any(|&f| f > 1) {
        return Err(FormatError::MalformedHeader {
            offset: table_offset,
            detail: "unexpected dimension table contents".into(),
        });
    }
    let mut model = ModelParams::init(&arch, 0).map_err(|e| FormatError::MalformedHeader {
        offset: table_offset,
        detail: e.to_string(),
    })?;
    for (i, head) in model.branches.iter_mut().flat_map(|b| b.heads.iter_mut()).enumerate() {
        head.learnable_up = flags[i] == 1;
    }

    let count_offset = r.pos as u64;
    let count = r.u64("payload length")?;
    let expected: usize = model.all_groups().into_iter().map(|g| model.group_len(g)).sum();
    if count != expected as u64 {
        return Err(FormatError::DimensionOverflow {
            offset: count_offset,
            detail: format!("payload holds {count} values, dimension table implies {expected}"),
        });
    }
    let payload_offset = r.pos as u64;
    let payload = r.take(expected * 8, "payload")?;
    let crc_offset = r.pos as u64;
    if r.u32("payload checksum")? != crc32fast::hash(payload) {
        return Err(FormatError::ChecksumMismatch {
            offset: crc_offset,
            section: "payload".into(),
        });
    }
    if r.pos != bytes.len() {
        return Err(FormatError::MalformedHeader {
            offset: r.pos as u64,
            detail: "trailing bytes after payload".into(),
        });
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for g in model.all_groups() {
        for s in model.group_mut(g) {
            for v in s.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
    }
    if !model.is_finite() {
        return Err(FormatError::Unsupported {
            offset: payload_offset,
            detail: "non-finite parameter values".into(),
        });
    }
    Ok(model)
}

pub fn save(model: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(path, e))
}
