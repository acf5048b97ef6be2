//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `SVDNOCK1`, header length as little-endian `u64`,
//! a JSON header, then every parameter as row-major little-endian `f64`.
//! The header's manifest gives each tensor's name, shape, and byte offset
//! relative to the start of the payload.

use super::{SvdNo, SvdNoConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SVDNOCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: SvdNoConfig,
    grid: Grid,
    in_channels: usize,
    out_channels: usize,
    config: serde_json::Value,
    manifest: Vec<ManifestEntry>,
}

/// A model plus the run configuration it was trained with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: SvdNo,
    pub config: serde_json::Value,
}

pub fn encode_checkpoint(model: &SvdNo, config: &serde_json::Value) -> Result<Vec<u8>> {
    let mut manifest = Vec::with_capacity(model.params().len());
    let mut payload = Vec::with_capacity(model.params().scalar_count() * 8);
    for p in model.params().iter() {
        let offset = payload.len() as u64;
        for x in p.value.data() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset,
            len: payload.len() as u64 - offset,
        });
    }
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        model: model.config().clone(),
        grid: model.grid().clone(),
        in_channels: model.in_channels(),
        out_channels: model.out_channels(),
        config: config.clone(),
        manifest,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn format_err(offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 {
        return Err(format_err(bytes.len() as u64, "file too short for checkpoint preamble"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format_err(0, "bad checkpoint magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let payload_start = 16u64
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| format_err(8, format!("header length {header_len} exceeds file size {}", bytes.len())))?;
    let header: Header = serde_json::from_slice(&bytes[16..payload_start as usize])
        .map_err(|e| format_err(16, format!("invalid header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(format_err(16, format!("unsupported format version {}", header.format_version)));
    }
    let payload = &bytes[payload_start as usize..];

    let mut model = SvdNo::new(header.model, header.grid, header.in_channels, header.out_channels, 0)?;
    let mut seen = vec![false; model.params().len()];
    for entry in &header.manifest {
        let id = model
            .params()
            .find(&entry.name)
            .ok_or_else(|| format_err(16, format!("unknown parameter `{}`", entry.name)))?;
        let param = model.params_mut().get_mut(id);
        if param.value.shape() != entry.shape.as_slice() || entry.len != param.value.numel() as u64 * 8 {
            return Err(format_err(
                16,
                format!("parameter `{}` has shape {:?}, manifest says {:?}", entry.name, param.value.shape(), entry.shape),
            ));
        }
        let end = entry
            .offset
            .checked_add(entry.len)
            .filter(|&e| e <= payload.len() as u64)
            .ok_or_else(|| {
                format_err(
                    payload_start + payload.len() as u64,
                    format!("payload truncated inside `{}`", entry.name),
                )
            })?;
        let raw = &payload[entry.offset as usize..end as usize];
        for (dst, chunk) in param.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        seen[id.index()] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let name = model.params().iter().nth(missing).map(|p| p.name.clone()).unwrap_or_default();
        return Err(format_err(16, format!("manifest lacks parameter `{name}`")));
    }
    Ok(Checkpoint {
        model,
        config: header.config,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &SvdNo, config: &serde_json::Value) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, config)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
