//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian u32):
//! `MFTT` magic · format version · config-block length + UTF-8 `key = value`
//! snapshot · entry count · per entry: name length + UTF-8 name, rank,
//! dims…, then raw little-endian f32 data. Parameters are written in the
//! model's canonical order, so identical models produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const MAGIC: &[u8; 4] = b"MFTT";
pub const FORMAT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Raw checkpoint contents before binding to a model.
pub struct CheckpointData {
    pub version: u32,
    pub config_snapshot: String,
    pub entries: Vec<(String, Vec<usize>, Vec<f32>)>,
}

pub fn write_checkpoint(
    path: &Path,
    config_snapshot: &str,
    entries: &[(String, Vec<usize>, Vec<f32>)],
) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = config_snapshot.as_bytes();
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, data) in entries {
        let nb = name.as_bytes();
        out.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        out.extend_from_slice(nb);
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = fs::read(path)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*off..*off + n)
            .ok_or_else(|| bad("truncated checkpoint"))?;
        *off += n;
        Ok(s)
    };
    let u32_at = |off: &mut usize| -> Result<u32> {
        let s = take(off, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut off, 4)? != MAGIC {
        return Err(bad("bad magic (not an MFTT checkpoint)"));
    }
    let version = u32_at(&mut off)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let cfg_len = u32_at(&mut off)? as usize;
    let config_snapshot = String::from_utf8(take(&mut off, cfg_len)?.to_vec())
        .map_err(|_| bad("config snapshot is not UTF-8"))?;
    let count = u32_at(&mut off)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32_at(&mut off)? as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| bad("parameter name is not UTF-8"))?;
        let rank = u32_at(&mut off)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32_at(&mut off)? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut off, numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, shape, data));
    }
    if off != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - off)));
    }
    Ok(CheckpointData {
        version,
        config_snapshot,
        entries,
    })
}

impl<S: Scalar> Model<S> {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let entries: Vec<(String, Vec<usize>, Vec<f32>)> = self
            .named_parameters()
            .into_iter()
            .map(|(name, t)| {
                let data: Vec<f32> = t.data().iter().map(|&v| v.as_f64() as f32).collect();
                (name, t.shape().to_vec(), data)
            })
            .collect();
        write_checkpoint(path, &self.cfg.snapshot(), &entries)
    }

    /// Build a model using the config embedded in the checkpoint itself.
    pub fn load_checkpoint_auto(path: &Path) -> Result<Model<S>> {
        let data = read_checkpoint(path)?;
        let cfg = ModelConfig::from_snapshot(&data.config_snapshot)?;
        Model::<S>::load_checkpoint(path, cfg)
    }

    /// Build a model from a checkpoint, verifying the embedded config
    /// snapshot against `cfg` and every parameter name/shape both ways.
    pub fn load_checkpoint(path: &Path, cfg: ModelConfig) -> Result<Model<S>> {
        let data = read_checkpoint(path)?;
        if data.config_snapshot != cfg.snapshot() {
            return Err(bad(format!(
                "config mismatch:\n--- checkpoint ---\n{}--- requested ---\n{}",
                data.config_snapshot,
                cfg.snapshot()
            )));
        }
        let model = Model::<S>::init(cfg, 0)?;
        let params = model.named_parameters();
        if params.len() != data.entries.len() {
            return Err(bad(format!(
                "parameter count mismatch: checkpoint {} vs model {}",
                data.entries.len(),
                params.len()
            )));
        }
        let mut by_name: std::collections::HashMap<&str, &(String, Vec<usize>, Vec<f32>)> =
            std::collections::HashMap::new();
        for e in &data.entries {
            if by_name.insert(e.0.as_str(), e).is_some() {
                return Err(bad(format!("duplicate parameter {:?}", e.0)));
            }
        }
        for (name, t) in &params {
            let (_, shape, values) = by_name
                .remove(name.as_str())
                .ok_or_else(|| bad(format!("checkpoint missing parameter {name:?}")))?;
            if shape != t.shape() {
                return Err(bad(format!(
                    "shape mismatch for {name:?}: checkpoint {shape:?} vs model {:?}",
                    t.shape()
                )));
            }
            t.with_data_mut(|d| {
                for (dst, &src) in d.iter_mut().zip(values) {
                    *dst = S::c(src as f64);
                }
            });
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(bad(format!("checkpoint has unknown parameter {extra:?}")));
        }
        Ok(model)
    }
}
