//! Run configuration: defaults, then the JSON file, then flags (with their
//! `PACT_*` environment fallbacks).

use std::fs;
use std::path::{Path, PathBuf};

use pact_core::data::{SplitProtocol, SynthConfig};
use pact_core::eval::{BinnedConfig, EventConfig, PeakSubset, DEFAULT_FRACTIONS};
use pact_core::model::{ModelKind, PactConfig};
use pact_core::train::TrainConfig;
use pact_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub fractions: Vec<f64>,
    pub subset: PeakSubset,
    pub events: EventConfig,
    pub binned: BinnedConfig,
    /// Points on the shared density grid.
    pub density_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            subset: PeakSubset::Hourly,
            events: EventConfig::default(),
            binned: BinnedConfig::default(),
            density_points: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub station: Option<String>,
    pub split: SplitProtocol,
    pub model: ModelKind,
    pub center_pressure: bool,
    /// Off forces `λ_tail = 0`.
    pub use_tail: bool,
    /// Off forces `λ_slope = 0`.
    pub use_slope: bool,
    pub pact: PactConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub predict_batch_size: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            station: None,
            split: SplitProtocol::PastOnly,
            model: ModelKind::Pact,
            center_pressure: true,
            use_tail: true,
            use_slope: true,
            pact: PactConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
            predict_batch_size: 256,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Training settings after the ablation toggles and the run seed apply.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        if !self.use_tail {
            t.loss.lambda_tail = 0.0;
        }
        if !self.use_slope {
            t.loss.lambda_slope = 0.0;
        }
        t
    }

    pub fn station_or_first(&self, stations: &[String]) -> Result<String> {
        match &self.station {
            Some(s) => Ok(s.clone()),
            None => stations
                .first()
                .cloned()
                .ok_or_else(|| Error::InvalidInput("dataset has no stations".into())),
        }
    }

    /// Writes the configuration as `resolved_config.json` under `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RESOLVED_CONFIG_FILE), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
