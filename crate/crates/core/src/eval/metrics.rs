use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::series::{aligned, HourlySeries};
use crate::data::{HORIZON, ORIGIN_STEP_H};
use crate::error::{Error, Result};

/// Peak fractions reported by default.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.10, 0.05, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub hours: usize,
}

/// Errors over a peak subset. Signed error is `mean(pred − gt)`, so negative
/// values mean underprediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMetrics {
    pub fraction: f64,
    /// Smallest ground-truth value inside the subset.
    pub threshold: f64,
    pub count: usize,
    pub rmse: f64,
    pub mae: f64,
    pub mean_signed_error: f64,
    pub max_abs_error: f64,
}

/// How the peak subset is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakSubset {
    /// Top hours by ground truth.
    #[default]
    Hourly,
    /// All hours of the top 6 h windows by ground-truth window peak.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: OverallMetrics,
    pub subset: PeakSubset,
    pub peak: Vec<PeakMetrics>,
}

fn error_stats(pairs: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let n = pairs.len() as f64;
    let (mut se, mut ae, mut signed, mut max) = (0.0, 0.0, 0.0, 0.0f64);
    for &(p, g) in pairs {
        let e = p - g;
        se += e * e;
        ae += e.abs();
        signed += e;
        max = max.max(e.abs());
    }
    ((se / n).sqrt(), ae / n, signed / n, max)
}

fn aligned_nonempty(pred: &HourlySeries, gt: &HourlySeries) -> Result<Vec<(f64, f64)>> {
    let pairs = aligned(pred, gt);
    if pairs.is_empty() {
        return Err(Error::InvalidInput("prediction and ground truth share no covered hours".into()));
    }
    if pairs.iter().any(|(p, g)| !p.is_finite() || !g.is_finite()) {
        return Err(Error::NonFinite("evaluated series".into()));
    }
    Ok(pairs)
}

/// RMSE and MAE over hours covered by both series.
pub fn overall_metrics(pred: &HourlySeries, gt: &HourlySeries) -> Result<OverallMetrics> {
    let pairs = aligned_nonempty(pred, gt)?;
    let (rmse, mae, _, _) = error_stats(&pairs);
    Ok(OverallMetrics {
        rmse,
        mae,
        hours: pairs.len(),
    })
}

/// Subset size for a fraction of `n`: `ceil(f·n)`, at least one. The small
/// tolerance keeps `0.1·20` at 2 despite rounding.
pub fn top_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("peak fraction {fraction} outside (0, 1]")));
    }
    Ok(())
}

fn block(fraction: f64, threshold: f64, pairs: &[(f64, f64)]) -> PeakMetrics {
    let (rmse, mae, mean_signed_error, max_abs_error) = error_stats(pairs);
    PeakMetrics {
        fraction,
        threshold,
        count: pairs.len(),
        rmse,
        mae,
        mean_signed_error,
        max_abs_error,
    }
}

/// Metrics over the `top_count` hours with the largest ground truth. Ties
/// are broken by hour.
pub fn peak_subset_metrics(pred: &HourlySeries, gt: &HourlySeries, fraction: f64) -> Result<PeakMetrics> {
    check_fraction(fraction)?;
    let mut pairs = aligned_nonempty(pred, gt)?;
    let k = top_count(pairs.len(), fraction);
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1));
    pairs.truncate(k);
    Ok(block(fraction, pairs[k - 1].1, &pairs))
}

/// Fully covered 6 h windows shared by both series, keyed by origin.
fn windows(pred: &HourlySeries, gt: &HourlySeries) -> Vec<Vec<(f64, f64)>> {
    let mut by_origin: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for (h, p) in pred.points() {
        if let Some(g) = gt.get(h) {
            by_origin
                .entry(h.div_euclid(ORIGIN_STEP_H) * ORIGIN_STEP_H)
                .or_default()
                .push((p, g));
        }
    }
    by_origin.into_values().filter(|w| w.len() == HORIZON).collect()
}

/// Metrics over every hour of the top windows ranked by ground-truth peak.
pub fn peak_sample_metrics(pred: &HourlySeries, gt: &HourlySeries, fraction: f64) -> Result<PeakMetrics> {
    check_fraction(fraction)?;
    aligned_nonempty(pred, gt)?;
    let mut ws: Vec<(f64, Vec<(f64, f64)>)> = windows(pred, gt)
        .into_iter()
        .map(|w| (w.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max), w))
        .collect();
    if ws.is_empty() {
        return Err(Error::InvalidInput("no fully covered 6 h window".into()));
    }
    let k = top_count(ws.len(), fraction);
    ws.sort_by(|a, b| b.0.total_cmp(&a.0));
    ws.truncate(k);
    let threshold = ws[k - 1].0;
    let pairs: Vec<(f64, f64)> = ws.into_iter().flat_map(|w| w.1).collect();
    Ok(block(fraction, threshold, &pairs))
}

pub fn metrics_report(
    pred: &HourlySeries,
    gt: &HourlySeries,
    fractions: &[f64],
    subset: PeakSubset,
) -> Result<MetricsReport> {
    let overall = overall_metrics(pred, gt)?;
    let peak = fractions
        .iter()
        .map(|&f| match subset {
            PeakSubset::Hourly => peak_subset_metrics(pred, gt, f),
            PeakSubset::Sample => peak_sample_metrics(pred, gt, f),
        })
        .collect::<Result<_>>()?;
    Ok(MetricsReport { overall, subset, peak })
}
