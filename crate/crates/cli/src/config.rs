//! Run configuration: a JSON file merged with command-line overrides, and
//! the `run.json` provenance record.

use std::fs;
use std::path::{Path, PathBuf};

use hscmt::train::TrainConfig;
use hscmt::{Error, ModelConfig, Result};
use serde::{Deserialize, Serialize};

/// Everything that determines a run. File values are overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// `paper`, `desk` or `micro`; supplies `model` when the file has none.
    pub preset: String,
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    /// Root of a `<class>/<image>` directory tree.
    pub data: Option<PathBuf>,
    /// Procedural dataset with this many images per class.
    pub synthetic: Option<usize>,
    /// Train / validation / test fractions (ignored for the recognised
    /// four-class MRI layout, whose published counts are used).
    pub fractions: (f64, f64, f64),
    /// Top minority classes of the training split up to the majority count.
    pub oversample: bool,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "desk".into(),
            model: None,
            train: TrainConfig::default(),
            data: None,
            synthetic: None,
            fractions: (0.7, 0.1, 0.2),
            oversample: true,
            out: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The effective model config: the explicit one, else the preset's.
    /// Dropout follows the training config.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = match &self.model {
            Some(m) => m.clone(),
            None => ModelConfig::preset(&self.preset)?,
        };
        m.dropout = self.train.dropout;
        m.validate()?;
        Ok(m)
    }
}

/// Provenance written at the start of every command and marked completed
/// at the end.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub status: String,
    pub version: String,
    pub seed: u64,
    pub args: Vec<String>,
    pub config: serde_json::Value,
}

pub const RUN_FILE: &str = "run.json";

impl RunRecord {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunRecord {
            command: command.into(),
            status: "running".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            args: std::env::args().skip(1).collect(),
            config,
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(RUN_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

/// Creates `out`, refusing to reuse a directory holding a completed run
/// unless `force` is set.
pub fn prepare_out(out: &Path, force: bool) -> Result<()> {
    let record = out.join(RUN_FILE);
    if record.exists() && !force {
        let completed = fs::read_to_string(&record)
            .ok()
            .and_then(|t| serde_json::from_str::<RunRecord>(&t).ok())
            .is_some_and(|r| r.status == "completed");
        if completed {
            return Err(Error::Config(format!("{} holds a completed run; pass --force to overwrite", out.display())));
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))
}
