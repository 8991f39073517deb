//! `SYNF1` checkpoint container.
//!
//! Layout: the 5-byte magic `SYNF1`, a little-endian `u32` manifest length,
//! the JSON manifest, then every tensor listed in the manifest as
//! little-endian `f32` values, in manifest order. The time offsets come last
//! under the name `time_offsets`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FieldModel, ModelConfig, ModelKind};
use super::time::TimeMap;
use crate::error::{Error, Result};
use crate::geom::Aabb;

pub const MAGIC: &[u8; 5] = b"SYNF1";
const OFFSETS_NAME: &str = "time_offsets";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    family: ModelKind,
    config: ModelConfig,
    bounds: Aabb,
    time_map: TimeMap,
    n_cameras: usize,
    offsets_frozen: bool,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn encode(model: &FieldModel) -> Vec<u8> {
    let mut tensors: Vec<Entry> = model
        .params
        .iter()
        .map(|(_, t)| Entry {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect();
    tensors.push(Entry {
        name: OFFSETS_NAME.into(),
        shape: vec![model.offsets.len()],
    });
    let manifest = Manifest {
        family: model.config.kind,
        config: model.config.clone(),
        bounds: model.bounds,
        time_map: model.time_map,
        n_cameras: model.offsets.len(),
        offsets_frozen: model.offsets.frozen,
        tensors,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * (model.params.num_scalars() + model.offsets.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.iter() {
        for v in &t.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    for v in &model.offsets.deltas {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FieldModel> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("missing SYNF1 magic"));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let json = bytes.get(9..9 + len).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(json)?;
    if manifest.family != manifest.config.kind {
        return Err(bad("family does not match config"));
    }
    let mut model = FieldModel::new(manifest.config, manifest.bounds, manifest.time_map, manifest.n_cameras)?;
    let mut cursor = 9 + len;
    let mut read = |n: usize| -> Result<Vec<f64>> {
        let raw = bytes
            .get(cursor..cursor + 4 * n)
            .ok_or_else(|| bad("truncated tensor data"))?;
        cursor += 4 * n;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    };
    let ids: Vec<_> = model.params.ids().collect();
    if manifest.tensors.len() != ids.len() + 1 {
        return Err(bad("tensor count mismatch"));
    }
    for (entry, id) in manifest.tensors.iter().zip(&ids) {
        let t = model.params.get(*id);
        if t.name != entry.name || t.shape != entry.shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` {:?} does not match model layout `{}` {:?}",
                entry.name, entry.shape, t.name, t.shape
            )));
        }
        let n = t.len();
        let data = read(n)?;
        model.params.data_mut(*id).copy_from_slice(&data);
    }
    let last = manifest.tensors.last().unwrap();
    if last.name != OFFSETS_NAME || last.shape != [manifest.n_cameras] {
        return Err(bad("offset table entry malformed"));
    }
    model.offsets.deltas = read(manifest.n_cameras)?;
    model.offsets.frozen = manifest.offsets_frozen;
    if cursor != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(model)
}

pub fn save(model: &FieldModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FieldModel> {
    decode(&std::fs::read(path)?)
}
