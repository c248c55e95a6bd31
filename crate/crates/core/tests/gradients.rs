//! Finite-difference checks of the full training objective with respect to
//! every parameter of every model kind.

use std::sync::Arc;

use pact_core::data::{build_grid_graph, ForcingGraph, Sample, StationMeta, FEATURES};
use pact_core::loss::{combined_loss_tape, fit_tail_threshold, LossConfig};
use pact_core::model::{Batch, Bound, Model, ModelKind, PactConfig};
use pact_core::numerics::{grad_check_many, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> PactConfig {
    PactConfig {
        d_model: 8,
        heads: 2,
        ff_width: 16,
        dropout: 0.0,
        ..PactConfig::default()
    }
}

fn samples(rng: &mut ChaCha8Rng, count: usize) -> Vec<Sample> {
    let edges = Arc::new(build_grid_graph(3, 3).unwrap());
    (0..count)
        .map(|k| {
            let graphs = [0i64, 1, 2].map(|j| {
                let data = (0..9 * FEATURES).map(|_| rng.random_range(-1.5..1.5)).collect();
                Arc::new(ForcingGraph {
                    timestamp: 6 * j,
                    edges: edges.clone(),
                    features: Tensor::from_rows(9, FEATURES, data).unwrap(),
                })
            });
            let target: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.3..1.0));
            Sample {
                origin: 6 * k as i64,
                season: 2000,
                graphs,
                station: StationMeta {
                    id: "s".into(),
                    lat: rng.random_range(38.0..42.0),
                    lon: rng.random_range(-76.0..-72.0),
                    elevation_m: 2.0,
                },
                target,
                peak: target.iter().copied().fold(f64::MIN, f64::max),
            }
        })
        .collect()
}

/// Moves every zero-initialized block to a generic point so no gradient is
/// trivially zero.
fn generic(model: &mut Model, rng: &mut ChaCha8Rng) {
    for (_, t) in model.params.iter_mut() {
        if t.data().iter().all(|&x| x == 0.0 || x == 1.0 || x == -2.0) {
            for x in t.data_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
    }
}

fn check(kind: ModelKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::init(kind, tiny(), seed).unwrap();
    generic(&mut model, &mut rng);
    let data = samples(&mut rng, 3);
    let refs: Vec<&Sample> = data.iter().collect();
    let batch = Batch::new(&refs).unwrap();
    let peaks: Vec<f64> = data.iter().map(|s| s.peak).collect();
    let tau = fit_tail_threshold(&peaks, 0.4).unwrap();
    let cfg = LossConfig::default();
    let names: Vec<String> = model.params.iter().map(|(k, _)| k.clone()).collect();
    let inputs: Vec<Tensor> = model.params.iter().map(|(_, v)| v.clone()).collect();
    grad_check_many(
        |t, vars| {
            let p = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
            let y = model.forward(t, &p, &batch, None)?;
            Ok(combined_loss_tape(t, y, &batch.target, &batch.peak, &cfg, Some(tau))?.0)
        },
        &inputs,
        1e-5,
    )
    .unwrap()
}

#[test]
fn full_pact_loss_matches_finite_differences() {
    for seed in 0..20 {
        let err = check(ModelKind::Pact, seed);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn baseline_losses_match_finite_differences() {
    for kind in [ModelKind::Stgnn, ModelKind::SimpleGnn] {
        for seed in 0..5 {
            let err = check(kind, seed);
            assert!(err < 1e-4, "{kind} seed {seed}: {err}");
        }
    }
}
