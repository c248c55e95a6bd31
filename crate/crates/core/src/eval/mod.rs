//! Hourly reconstruction, overall and peak-subset metrics, and event-level
//! peak diagnostics.

pub mod diagnostics;
pub mod events;
pub mod io;
pub mod metrics;
pub mod series;
pub mod svg;

pub use diagnostics::{binned_peak_rmse, density_grid, kde_density, silverman_bandwidth, BinPoint, BinnedConfig};
pub use events::{event_threshold, extract_events, extract_events_above, pair_events, EventConfig, PairedPeak, PeakEvent};
pub use metrics::{
    metrics_report, overall_metrics, peak_sample_metrics, peak_subset_metrics, MetricsReport, OverallMetrics,
    PeakMetrics, PeakSubset, DEFAULT_FRACTIONS,
};
pub use series::{aligned, reconstruct_hourly, HourlySeries};
