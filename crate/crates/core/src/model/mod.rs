//! PACT and the graph baselines on top of the reverse-mode tape.

pub mod baselines;
pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod pact;
pub mod params;


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{station_features, Batch};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{ModelKind, PactConfig};
pub use pact::{pact_forward, PactOutput};
pub use params::{Bound, ParamSpec, ParamStore};

use crate::data::Sample;
use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};

/// Parameter layout of a model kind.
pub fn param_specs(kind: ModelKind, cfg: &PactConfig) -> Vec<ParamSpec> {
    match kind {
        ModelKind::Pact => pact::pact_specs(cfg),
        ModelKind::Stgnn => baselines::stgnn_specs(cfg),
        ModelKind::SimpleGnn => baselines::simple_gnn_specs(cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub config: PactConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn init(kind: ModelKind, config: PactConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamStore::init(&param_specs(kind, &config), &mut rng);
        Ok(Model { kind, config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(kind: ModelKind, config: PactConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        params.check(&param_specs(kind, &config))?;
        Ok(Model { kind, config, params })
    }

    /// Records a forward pass and returns the `[B × 6]` prediction. Passing an
    /// rng enables dropout (training mode).
    pub fn forward(&self, t: &mut Tape, p: &Bound, batch: &Batch, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        match self.kind {
            ModelKind::Pact => Ok(pact_forward(t, p, &self.config, batch, rng)?.y),
            ModelKind::Stgnn => baselines::stgnn_forward(t, p, &self.config, batch, rng),
            ModelKind::SimpleGnn => baselines::simple_gnn_forward(t, p, &self.config, batch, rng),
        }
    }

    /// Eval-mode predictions `[B × 6]` for one batch.
    pub fn predict_batch(&self, batch: &Batch) -> Result<Tensor> {
        let mut t = Tape::new();
        let p = self.params.bind_frozen(&mut t);
        let y = self.forward(&mut t, &p, batch, None)?;
        Ok(t.value(y).clone())
    }

    /// Eval-mode predictions for any number of samples, in input order.
    pub fn predict(&self, samples: &[Sample], batch_size: usize) -> Result<Vec<[f64; crate::data::HORIZON]>> {
        let mut out = Vec::with_capacity(samples.len());
        let refs: Vec<&Sample> = samples.iter().collect();
        for chunk in refs.chunks(batch_size.max(1)) {
            let y = self.predict_batch(&Batch::new(chunk)?)?;
            for r in 0..y.rows() {
                out.push(y.row(r).try_into().expect("six outputs"));
            }
        }
        Ok(out)
    }
}
