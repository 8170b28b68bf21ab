//! Checkpoint directories: `manifest.json` (configs, progress, RNG state and
//! a name → (shape, offset, byte length) index) plus `params.bin`, the
//! concatenated little-endian `f32` arrays in index order.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::param::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

/// Every random draw during training is keyed by `(seed, epoch, ...)`, so
/// the seed and the next epoch index are the complete generator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub byte_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: RngState,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    pub adam_step: u64,
    /// Model parameters, in registration order.
    pub params: Vec<IndexEntry>,
    /// Adam moments, named `m.<param>` and `v.<param>`.
    pub optimizer: Vec<IndexEntry>,
}

fn push_tensor(blob: &mut Vec<u8>, index: &mut Vec<IndexEntry>, name: String, t: &Tensor<f32>) {
    let offset = blob.len();
    for v in t.data() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    index.push(IndexEntry { name, shape: t.shape().to_vec(), offset, byte_len: blob.len() - offset });
}

/// Writes `model` and the optimiser state into directory `dir` (created if
/// absent).
pub fn save_checkpoint(dir: &Path, model: &Model<f32>, state: &TrainState) -> Result<()> {
    let mut blob = Vec::new();
    let mut params = Vec::new();
    let mut optimizer = Vec::new();
    for (_, p) in model.store.iter() {
        push_tensor(&mut blob, &mut params, p.name.clone(), &p.tensor);
    }
    for ((_, p), (m, v)) in model.store.iter().zip(state.adam.m.iter().zip(&state.adam.v)) {
        push_tensor(&mut blob, &mut optimizer, format!("m.{}", p.name), m);
        push_tensor(&mut blob, &mut optimizer, format!("v.{}", p.name), v);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.config.clone(),
        train: state.cfg.clone(),
        epoch: state.epoch,
        rng: RngState { seed: state.cfg.seed, next_epoch: state.epoch },
        best_epoch: state.best.map(|b| b.0),
        best_val_acc: state.best.map(|b| b.1),
        adam_step: state.adam.t,
        params,
        optimizer,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&manifest_path, e))
}

/// Parsed manifest and blob with every index entry bounds-checked.
struct RawCheckpoint {
    manifest: Manifest,
    blob: Vec<u8>,
}

impl RawCheckpoint {
    fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let blob_path = dir.join(BLOB_FILE);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let expected: usize = manifest.params.iter().chain(&manifest.optimizer).map(|e| e.byte_len).sum();
        if blob.len() != expected {
            return Err(Error::Checkpoint(format!("{BLOB_FILE} holds {} bytes, index describes {expected}", blob.len())));
        }
        for e in manifest.params.iter().chain(&manifest.optimizer) {
            let numel: usize = e.shape.iter().product();
            if e.byte_len != numel * 4 {
                return Err(Error::Checkpoint(format!(
                    "entry `{}`: byte length {} does not match shape {:?}",
                    e.name, e.byte_len, e.shape
                )));
            }
            if e.offset + e.byte_len > blob.len() {
                return Err(Error::Checkpoint(format!("entry `{}` extends past the end of {BLOB_FILE}", e.name)));
            }
        }
        Ok(RawCheckpoint { manifest, blob })
    }

    fn tensor(&self, e: &IndexEntry) -> Tensor<f32> {
        let bytes = &self.blob[e.offset..e.offset + e.byte_len];
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Tensor::from_parts(&e.shape, data).expect("length checked against shape")
    }
}

fn index_by_name<'a>(entries: &'a [IndexEntry], what: &str) -> Result<HashMap<&'a str, &'a IndexEntry>> {
    let mut map = HashMap::new();
    for e in entries {
        if map.insert(e.name.as_str(), e).is_some() {
            return Err(Error::Checkpoint(format!("{what} entry `{}` appears more than once", e.name)));
        }
    }
    Ok(map)
}

fn take_exact(raw: &RawCheckpoint, map: &HashMap<&str, &IndexEntry>, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let e = map.get(name).ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))?;
    if e.shape != shape {
        return Err(Error::Checkpoint(format!("entry `{name}` has shape {:?}, model expects {shape:?}", e.shape)));
    }
    Ok(raw.tensor(e))
}

/// Restores a model and its training state. Every model parameter and
/// moment must be present exactly once with the model's shape.
pub fn load_checkpoint(dir: &Path) -> Result<(Model<f32>, TrainState)> {
    let raw = RawCheckpoint::read(dir)?;
    let m = &raw.manifest;
    let mut model = Model::<f32>::new(m.model.clone(), 0).map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
    let params = index_by_name(&m.params, "parameter")?;
    let moments = index_by_name(&m.optimizer, "optimizer")?;
    let known: HashSet<&str> = model.store.iter().map(|(_, p)| p.name.as_str()).collect();
    if let Some(extra) = m.params.iter().find(|e| !known.contains(e.name.as_str())) {
        return Err(Error::Checkpoint(format!("entry `{}` is not a parameter of this model", extra.name)));
    }
    let mut adam = AdamState { m: Vec::new(), v: Vec::new(), t: m.adam_step };
    for p in model.store.iter_mut() {
        let shape = p.tensor.shape().to_vec();
        p.tensor = take_exact(&raw, &params, &p.name, &shape)?;
        adam.m.push(take_exact(&raw, &moments, &format!("m.{}", p.name), &shape)?);
        adam.v.push(take_exact(&raw, &moments, &format!("v.{}", p.name), &shape)?);
    }
    if m.optimizer.len() != 2 * model.store.len() {
        return Err(Error::Checkpoint(format!(
            "optimizer index has {} entries, expected {}",
            m.optimizer.len(),
            2 * model.store.len()
        )));
    }
    model.params.classifier.dropout = m.train.dropout;
    let best = m.best_epoch.zip(m.best_val_acc);
    let state = TrainState { cfg: m.train.clone(), epoch: m.epoch, adam, best };
    Ok((model, state))
}

/// Outcome of [`import_weights`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportReport {
    /// Parameters overwritten from the checkpoint.
    pub loaded: Vec<String>,
    /// Checkpoint entries with no same-named, same-shaped model parameter.
    pub unmatched: Vec<String>,
    /// Model parameters the checkpoint does not provide (left untouched).
    pub missing: Vec<String>,
}

/// Copies parameters from a checkpoint directory into `store` by path.
/// Nothing is skipped silently: every entry lands in one of the report's
/// lists.
pub fn import_weights(store: &mut ParamStore<f32>, dir: &Path) -> Result<ImportReport> {
    let raw = RawCheckpoint::read(dir)?;
    let mut report = ImportReport::default();
    let entries = index_by_name(&raw.manifest.params, "parameter")?;
    for e in &raw.manifest.params {
        match store.id(&e.name) {
            Some(id) if store.tensor(id).shape() == e.shape.as_slice() => {
                *store.tensor_mut(id) = raw.tensor(e);
                report.loaded.push(e.name.clone());
            }
            _ => report.unmatched.push(e.name.clone()),
        }
    }
    report.missing = store.iter().filter(|(_, p)| !entries.contains_key(p.name.as_str())).map(|(_, p)| p.name.clone()).collect();
    Ok(report)
}
