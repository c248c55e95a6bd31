use std::sync::Arc;

use crate::data::{Sample, StationMeta, FEATURES, HORIZON, INPUT_STEPS};
use crate::error::{Error, Result};
use crate::numerics::{Adjacency, Tensor};

/// Station metadata as seen by the networks: degrees and meters brought to
/// order one by fixed divisors.
pub fn station_features(s: &StationMeta) -> [f64; 3] {
    [s.lat / 90.0, s.lon / 180.0, s.elevation_m / 10.0]
}

/// Samples stacked for one forward pass.
///
/// Node features are laid out sample-major, then input step, then node:
/// row `(b·3 + τ)·N + i`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub nodes: usize,
    pub x: Tensor,
    /// Features of `G_t` only, `[B·N × 5]`.
    pub x_last: Tensor,
    /// `[B × 3]` scaled station metadata.
    pub meta: Tensor,
    /// `[B × 6]` targets in meters.
    pub target: Tensor,
    pub peak: Vec<f64>,
    pub adjacency: Arc<Adjacency>,
}

impl Batch {
    pub fn new(samples: &[&Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let edges = first.graphs[0].edges.clone();
        let n = edges.node_count();
        let b = samples.len();
        let mut x = Vec::with_capacity(b * INPUT_STEPS * n * FEATURES);
        let mut x_last = Vec::with_capacity(b * n * FEATURES);
        let mut meta = Vec::with_capacity(b * 3);
        let mut target = Vec::with_capacity(b * HORIZON);
        let mut peak = Vec::with_capacity(b);
        for s in samples {
            for (k, g) in s.graphs.iter().enumerate() {
                if !Arc::ptr_eq(&g.edges, &edges) && g.edges.pairs() != edges.pairs() {
                    return Err(Error::InvalidInput("samples in a batch must share one grid graph".into()));
                }
                if g.features.shape() != [n, FEATURES] {
                    return Err(Error::InvalidShape(format!(
                        "graph features {:?}, expected [{n}, {FEATURES}]",
                        g.features.shape()
                    )));
                }
                x.extend_from_slice(g.features.data());
                if k == INPUT_STEPS - 1 {
                    x_last.extend_from_slice(g.features.data());
                }
            }
            meta.extend_from_slice(&station_features(&s.station));
            target.extend_from_slice(&s.target);
            peak.push(s.peak);
        }
        Ok(Batch {
            size: b,
            nodes: n,
            x: Tensor::from_rows(b * INPUT_STEPS * n, FEATURES, x)?,
            x_last: Tensor::from_rows(b * n, FEATURES, x_last)?,
            meta: Tensor::from_rows(b, 3, meta)?,
            target: Tensor::from_rows(b, HORIZON, target)?,
            peak,
            adjacency: edges.adjacency().clone(),
        })
    }
}
