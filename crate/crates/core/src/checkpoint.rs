//! Versioned binary checkpoint: config snapshot, named little-endian `f64`
//! tensors and a SHA-256 trailer over everything before it.
//!
//! Layout: `DIQPCKPT`, u32 version, u64 config length, config JSON, u64
//! tensor count, then per tensor: u32 name length, name, u32 rank, u64 dims,
//! f64 data; finally 32 checksum bytes.

use std::fs;
use std::path::Path;

use diqp_tensor::Tensor;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{DiqpError, Result};
use crate::model::DiqpModel;

const MAGIC: &[u8; 8] = b"DIQPCKPT";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &DiqpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for (name, t) in model.store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(DiqpError::format(self.path, "checkpoint is truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Dotted paths whose values differ between two JSON documents.
fn diff_paths(a: &Value, b: &Value, prefix: &str, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => diff_paths(u, v, &p, out),
                    _ => out.push(p),
                }
            }
        }
        _ if a != b => out.push(prefix.to_string()),
        _ => {}
    }
}

/// Field paths where two model configs disagree.
pub fn config_differences(a: &ModelConfig, b: &ModelConfig) -> Vec<String> {
    let mut out = Vec::new();
    diff_paths(
        &serde_json::to_value(a).expect("config serializes"),
        &serde_json::to_value(b).expect("config serializes"),
        "model",
        &mut out,
    );
    out
}

/// Decode a checkpoint. With `expected`, the stored config must match it.
pub fn from_bytes(buf: &[u8], path: &Path, expected: Option<&ModelConfig>) -> Result<DiqpModel> {
    if buf.len() < MAGIC.len() + 32 || &buf[..8] != MAGIC {
        return Err(DiqpError::format(path, "not a checkpoint file"));
    }
    let (body, trailer) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(DiqpError::format(path, "checkpoint checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 8, path };
    let version = r.u32()?;
    if version != VERSION {
        return Err(DiqpError::format(path, format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = r.u64()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(cfg_len)?).map_err(|e| DiqpError::format(path, e.to_string()))?;
    if let Some(expected) = expected {
        let diffs = config_differences(&config, expected);
        if !diffs.is_empty() {
            return Err(DiqpError::ConfigMismatch(diffs));
        }
    }
    let mut model = DiqpModel::new(&config, 0)?;
    let count = r.u64()? as usize;
    if count != model.store.len() {
        return Err(DiqpError::format(
            path,
            format!("checkpoint holds {count} tensors, model has {}", model.store.len()),
        ));
    }
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| DiqpError::format(path, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = r
            .take(numel * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let id = model
            .store
            .find(&name)
            .ok_or_else(|| DiqpError::format(path, format!("unknown tensor {name}")))?;
        if model.store.get(id).shape() != shape.as_slice() {
            return Err(DiqpError::format(
                path,
                format!("tensor {name} has shape {shape:?}, model expects {:?}", model.store.get(id).shape()),
            ));
        }
        *model.store.get_mut(id) = Tensor::new(shape, data)?;
    }
    if r.pos != body.len() {
        return Err(DiqpError::format(path, "trailing bytes after tensors"));
    }
    Ok(model)
}

pub fn save(path: &Path, model: &DiqpModel) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DiqpError::io(dir, e))?;
    }
    fs::write(path, to_bytes(model)).map_err(|e| DiqpError::io(path, e))
}

pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<DiqpModel> {
    let buf = fs::read(path).map_err(|e| DiqpError::io(path, e))?;
    from_bytes(&buf, path, expected)
}
