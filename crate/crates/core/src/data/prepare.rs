use super::manifest::DatasetManifest;
use super::norm::{apply_norm_all, fit_norm_stats, NormStats};
use super::sample::{Sample, SkipReport};
use super::split::{split_samples, split_years, SplitProtocol, YearSplit};
use crate::error::{Error, Result};

/// Normalized train/val/test samples of one station.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub years: YearSplit,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub norm: NormStats,
    pub skipped: SkipReport,
}

/// Split → assemble → normalize. Statistics are fitted on the training split
/// unless `norm` supplies them (e.g. from a checkpoint).
pub fn prepare_splits(
    manifest: &DatasetManifest,
    station: &str,
    protocol: &SplitProtocol,
    center_pressure: bool,
    norm: Option<&NormStats>,
) -> Result<PreparedSplits> {
    let years = split_years(&manifest.years(), protocol)?;
    let wanted: Vec<i32> = years.train.iter().chain(&years.val).chain(&years.test).copied().collect();
    let (samples, skipped) = manifest.assemble(station, Some(&wanted), center_pressure)?;
    let raw = split_samples(samples, &years);
    let norm = match norm {
        Some(n) => n.clone(),
        None if raw.train.is_empty() => {
            return Err(Error::InvalidConfig(
                "no training samples to fit normalization statistics on".into(),
            ))
        }
        None => fit_norm_stats(&raw.train)?,
    };
    Ok(PreparedSplits {
        train: apply_norm_all(&raw.train, &norm),
        val: apply_norm_all(&raw.val, &norm),
        test: apply_norm_all(&raw.test, &norm),
        years,
        norm,
        skipped,
    })
}
