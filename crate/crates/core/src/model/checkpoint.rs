use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelKind, PactConfig};
use super::params::ParamStore;
use super::Model;
use crate::data::{GridSpec, NormStats, StationMeta};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pact-checkpoint/1";

/// Trained parameters plus everything needed to reuse them on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: ModelKind,
    pub config: PactConfig,
    pub station: StationMeta,
    pub grid: GridSpec,
    pub center_pressure: bool,
    pub norm: NormStats,
    pub tau_tail: Option<f64>,
    pub epoch: usize,
    pub val_rmse: f64,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::from_params(self.kind, self.config.clone(), self.params.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads and checks the parameter layout against the stored config.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown checkpoint format {:?}", ck.format)));
        }
        ck.model()?;
        Ok(ck)
    }
}
