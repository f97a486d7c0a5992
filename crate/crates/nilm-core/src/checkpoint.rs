//! Manifest + blob persistence.
//!
//! A checkpoint is a JSON manifest (format version, model config,
//! normalization stats, and a parameter index of name → shape/offset/len)
//! next to a flat binary blob of little-endian f32 values in manifest
//! order. Window caches reuse the same convention with f64 payloads,
//! keyed by a config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{NormStats, Window};
use crate::error::{Error, Result};
use crate::model::{init_model, Model, ModelConfig};
use crate::tensor::{lit, Scalar};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const WINDOW_CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    config: ModelConfig,
    norm: NormStats,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: u64,
    /// Element count.
    len: usize,
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Write `<path>` (JSON manifest) and `<path with .bin>` (parameter blob).
pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    for (name, p) in model.parameters() {
        entries.push(ParamEntry {
            name,
            shape: p.shape().to_vec(),
            offset: blob.len() as u64,
            len: p.len(),
        });
        for v in p.data().iter() {
            let f = v.to_f32().unwrap();
            blob.extend_from_slice(&f.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: model.cfg.clone(),
        norm: model.norm.clone(),
        params: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest serialization failed: {e}")))?;
    fs::write(path, json)?;
    fs::write(blob_path(path), blob)?;
    Ok(())
}

/// Rebuild a model from a manifest + blob pair. Fails on version mismatch,
/// a truncated blob, or a parameter index that does not match the config's
/// parameter walk; no partial model is ever returned.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let json = fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read manifest {}: {e}", path.display())))?;
    let manifest: CheckpointManifest = serde_json::from_str(&json)
        .map_err(|e| Error::Checkpoint(format!("bad manifest {}: {e}", path.display())))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {} (expected {})",
            manifest.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    let blob = fs::read(blob_path(path))
        .map_err(|e| Error::Checkpoint(format!("cannot read parameter blob: {e}")))?;

    let mut model: Model<T> = init_model(&manifest.config)?;
    model.norm = manifest.norm.clone();
    let params = model.parameters();
    if params.len() != manifest.params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter index has {} entries but the config implies {}",
            manifest.params.len(),
            params.len()
        )));
    }
    for ((name, p), entry) in params.iter().zip(&manifest.params) {
        if name != &entry.name || p.shape() != entry.shape.as_slice() || p.len() != entry.len {
            return Err(Error::Checkpoint(format!(
                "parameter mismatch at {name}: manifest has {} {:?}",
                entry.name, entry.shape
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.len * 4;
        if end > blob.len() {
            return Err(Error::Checkpoint(format!(
                "truncated blob: {name} needs bytes {start}..{end}, blob has {}",
                blob.len()
            )));
        }
        let vals: Vec<T> = blob[start..end]
            .chunks_exact(4)
            .map(|c| lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        p.set_data(&vals);
    }
    Ok(model)
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowCacheManifest {
    format_version: u32,
    /// Hash of the producing configuration; a cache is only valid for it.
    config_key: u64,
    windows: Vec<WindowEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowEntry {
    house: String,
    start_ts: i64,
    period: i64,
    len: usize,
    n_appliances: usize,
    normalized: bool,
}

/// Persist windows as manifest + f64 blob keyed by a config hash.
pub fn save_window_cache(windows: &[Window], path: &Path, config_key: u64) -> Result<()> {
    let mut entries = Vec::with_capacity(windows.len());
    let mut blob: Vec<u8> = Vec::new();
    for w in windows {
        entries.push(WindowEntry {
            house: w.house.clone(),
            start_ts: w.start_ts,
            period: w.period,
            len: w.len(),
            n_appliances: w.targets.len(),
            normalized: w.normalized,
        });
        for &v in &w.mains {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        for trace in &w.targets {
            for &v in trace {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        for states in &w.states {
            blob.extend_from_slice(states);
        }
        blob.extend(w.mask.iter().map(|&m| u8::from(m)));
    }
    let manifest = WindowCacheManifest {
        format_version: WINDOW_CACHE_FORMAT_VERSION,
        config_key,
        windows: entries,
    };
    let json = serde_json::to_string(&manifest)
        .map_err(|e| Error::Checkpoint(format!("cache manifest serialization failed: {e}")))?;
    fs::write(path, json)?;
    fs::write(blob_path(path), blob)?;
    Ok(())
}

/// Load a window cache. Returns `Ok(None)` when the cache is absent or was
/// produced under a different config key.
pub fn load_window_cache(path: &Path, config_key: u64) -> Result<Option<Vec<Window>>> {
    let json = match fs::read_to_string(path) {
        Ok(j) => j,
        Err(_) => return Ok(None),
    };
    let manifest: WindowCacheManifest = serde_json::from_str(&json)
        .map_err(|e| Error::Checkpoint(format!("bad cache manifest: {e}")))?;
    if manifest.format_version != WINDOW_CACHE_FORMAT_VERSION || manifest.config_key != config_key {
        return Ok(None);
    }
    let blob = fs::read(blob_path(path))
        .map_err(|e| Error::Checkpoint(format!("cannot read cache blob: {e}")))?;
    let mut windows = Vec::with_capacity(manifest.windows.len());
    let mut pos = 0usize;
    let take_f64 = |blob: &[u8], pos: &mut usize, n: usize| -> Result<Vec<f64>> {
        let end = *pos + n * 8;
        if end > blob.len() {
            return Err(Error::Checkpoint("truncated window cache blob".into()));
        }
        let out = blob[*pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *pos = end;
        Ok(out)
    };
    let take_u8 = |blob: &[u8], pos: &mut usize, n: usize| -> Result<Vec<u8>> {
        let end = *pos + n;
        if end > blob.len() {
            return Err(Error::Checkpoint("truncated window cache blob".into()));
        }
        let out = blob[*pos..end].to_vec();
        *pos = end;
        Ok(out)
    };
    for e in &manifest.windows {
        let mains = take_f64(&blob, &mut pos, e.len)?;
        let mut targets = Vec::with_capacity(e.n_appliances);
        for _ in 0..e.n_appliances {
            targets.push(take_f64(&blob, &mut pos, e.len)?);
        }
        let mut states = Vec::with_capacity(e.n_appliances);
        for _ in 0..e.n_appliances {
            states.push(take_u8(&blob, &mut pos, e.len)?);
        }
        let mask = take_u8(&blob, &mut pos, e.len)?.iter().map(|&b| b != 0).collect();
        windows.push(Window {
            house: e.house.clone(),
            start_ts: e.start_ts,
            period: e.period,
            mains,
            targets,
            states,
            mask,
            normalized: e.normalized,
        });
    }
    Ok(Some(windows))
}
