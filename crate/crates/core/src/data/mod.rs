//! Forcing graphs, samples, normalization, synthetic datasets and splits.

pub mod graph;
pub mod manifest;
pub mod norm;
pub mod prepare;
pub mod sample;
pub mod split;
pub mod synth;

pub use graph::{build_grid_graph, center_pressure, EdgeList, ForcingGraph, ForcingSnapshot, GridSpec, FEATURES};
pub use manifest::{fmt_f64, write_synthetic_dataset, DatasetManifest, Period};
pub use norm::{apply_norm, apply_norm_all, fit_norm_stats, NormStats};
pub use prepare::{prepare_splits, PreparedSplits};
pub use sample::{
    assemble_samples, AssembleOptions, Sample, SkipReport, StationMeta, SurgeSeries, HORIZON, INPUT_STEPS, ORIGIN_STEP_H,
};
pub use split::{split_samples, split_years, SampleSplits, SplitProtocol, YearRange, YearSplit};
pub use synth::{synthesize, StationSpec, SynthConfig};
