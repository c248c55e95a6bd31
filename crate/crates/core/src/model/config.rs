use serde::{Deserialize, Serialize};

use crate::data::{HORIZON, INPUT_STEPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pact,
    Stgnn,
    SimpleGnn,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pact" => Ok(ModelKind::Pact),
            "stgnn" => Ok(ModelKind::Stgnn),
            "simple_gnn" => Ok(ModelKind::SimpleGnn),
            _ => Err(Error::InvalidConfig(format!("unknown model {s:?} (pact, stgnn, simple_gnn)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Pact => "pact",
            ModelKind::Stgnn => "stgnn",
            ModelKind::SimpleGnn => "simple_gnn",
        })
    }
}

/// Architecture hyperparameters. The baselines reuse `d_model`,
/// `sage_layers`, `dropout` and `leaky_slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PactConfig {
    pub d_model: usize,
    pub sage_layers: usize,
    pub heads: usize,
    pub temporal_layers: usize,
    pub ff_width: usize,
    pub dropout: f64,
    /// Tail residual clip `c`, meters.
    pub tail_clip: f64,
    pub leaky_slope: f64,
    /// Without the dual head the output is the base head alone.
    pub use_dual_head: bool,
    pub horizon: usize,
    pub input_steps: usize,
}

impl Default for PactConfig {
    fn default() -> Self {
        PactConfig {
            d_model: 64,
            sage_layers: 2,
            heads: 4,
            temporal_layers: 2,
            ff_width: 256,
            dropout: 0.1,
            tail_clip: 1.0,
            leaky_slope: 0.01,
            use_dual_head: true,
            horizon: HORIZON,
            input_steps: INPUT_STEPS,
        }
    }
}

impl PactConfig {
    /// Default layout at latent width `d`.
    pub fn with_width(d: usize) -> Self {
        PactConfig {
            d_model: d,
            ff_width: 4 * d,
            ..PactConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.sage_layers == 0 {
            return bad("sage_layers must be at least 1");
        }
        if self.ff_width == 0 {
            return bad("ff_width must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.tail_clip > 0.0) || !self.tail_clip.is_finite() {
            return bad("tail_clip must be positive");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        if self.horizon != HORIZON || self.input_steps != INPUT_STEPS {
            return bad("horizon is fixed at 6 and input_steps at 3");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_checked() {
        PactConfig::default().validate().unwrap();
        PactConfig::with_width(32).validate().unwrap();
        for cfg in [
            PactConfig { heads: 3, ..PactConfig::default() },
            PactConfig { sage_layers: 0, ..PactConfig::default() },
            PactConfig { tail_clip: 0.0, ..PactConfig::default() },
            PactConfig { horizon: 5, ..PactConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn kind_round_trip() {
        for k in [ModelKind::Pact, ModelKind::Stgnn, ModelKind::SimpleGnn] {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
