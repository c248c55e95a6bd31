use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{ForcingGraph, FEATURES};
use super::sample::Sample;
use crate::error::{Error, Result};

const NAMES: [&str; FEATURES] = ["lat", "lon", "u", "v", "p"];
/// Columns that may be constant (a one-row or one-column grid); they are
/// centred but not scaled.
const COORDINATES: usize = 2;

/// Training-split mean and standard deviation of `[lat, lon, u, v, p′]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; FEATURES],
            std: [1.0; FEATURES],
        }
    }
}

/// Statistics over every node of every input graph of the training samples.
pub fn fit_norm_stats(train: &[Sample]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::InvalidInput("cannot fit normalization on an empty split".into()));
    }
    let mut sum = [0.0; FEATURES];
    let mut count = 0usize;
    for s in train {
        for g in &s.graphs {
            for row in g.features.data().chunks(FEATURES) {
                for (acc, x) in sum.iter_mut().zip(row) {
                    *acc += x;
                }
            }
            count += g.node_count();
        }
    }
    let mean = sum.map(|x| x / count as f64);
    let mut sq = [0.0; FEATURES];
    for s in train {
        for g in &s.graphs {
            for row in g.features.data().chunks(FEATURES) {
                for k in 0..FEATURES {
                    sq[k] += (row[k] - mean[k]).powi(2);
                }
            }
        }
    }
    let mut std = [0.0; FEATURES];
    for k in 0..FEATURES {
        std[k] = (sq[k] / count as f64).sqrt();
        if !(std[k] > 1e-12 * (1.0 + mean[k].abs())) {
            if k < COORDINATES {
                std[k] = 1.0;
            } else {
                return Err(Error::ZeroVariance(NAMES[k]));
            }
        }
    }
    Ok(NormStats { mean, std })
}

pub fn normalize_graph(g: &ForcingGraph, stats: &NormStats) -> ForcingGraph {
    let mut out = g.clone();
    for row in out.features.data_mut().chunks_mut(FEATURES) {
        for k in 0..FEATURES {
            row[k] = (row[k] - stats.mean[k]) / stats.std[k];
        }
    }
    out
}

/// Normalized copy of one sample; targets stay in meters.
pub fn apply_norm(sample: &Sample, stats: &NormStats) -> Sample {
    let mut out = sample.clone();
    out.graphs = sample
        .graphs
        .clone()
        .map(|g| Arc::new(normalize_graph(&g, stats)));
    out
}

/// Normalizes a whole set, keeping graphs that were shared between samples
/// shared in the output.
pub fn apply_norm_all(samples: &[Sample], stats: &NormStats) -> Vec<Sample> {
    let mut cache: HashMap<*const ForcingGraph, Arc<ForcingGraph>> = HashMap::new();
    samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            out.graphs = s.graphs.clone().map(|g| {
                cache
                    .entry(Arc::as_ptr(&g))
                    .or_insert_with(|| Arc::new(normalize_graph(&g, stats)))
                    .clone()
            });
            out
        })
        .collect()
}
