use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::lower_quantile;

/// Used when the peaks carry no spread at all.
pub const FALLBACK_BANDWIDTH: f64 = 0.01;

/// `0.9·min(sd, IQR/1.34)·n^(−1/5)`, falling back to the non-zero spread
/// measure, then to [`FALLBACK_BANDWIDTH`].
pub fn silverman_bandwidth(peaks: &[f64]) -> Result<f64> {
    if peaks.is_empty() {
        return Err(Error::InvalidInput("bandwidth of no peaks".into()));
    }
    let n = peaks.len() as f64;
    let mean = peaks.iter().sum::<f64>() / n;
    let sd = if peaks.len() > 1 {
        (peaks.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let iqr = (lower_quantile(peaks, 0.75)? - lower_quantile(peaks, 0.25)?) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Ok(FALLBACK_BANDWIDTH),
    };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Gaussian KDE of `peaks` evaluated on `grid`.
pub fn kde_density(peaks: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if peaks.is_empty() {
        return Err(Error::InvalidInput("density of no peaks".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth {bandwidth} must be positive")));
    }
    let norm = 1.0 / (peaks.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            norm * peaks
                .iter()
                .map(|&p| (-0.5 * ((x - p) / bandwidth).powi(2)).exp())
                .sum::<f64>()
        })
        .collect())
}

/// `n` evenly spaced points covering `[lo − 3b, hi + 3b]` of the samples.
pub fn density_grid(samples: &[f64], bandwidth: f64, n: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinnedConfig {
    pub bins: usize,
    pub smooth_window: usize,
    pub min_count: usize,
}

impl Default for BinnedConfig {
    fn default() -> Self {
        BinnedConfig {
            bins: 10,
            smooth_window: 3,
            min_count: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinPoint {
    pub bin_center: f64,
    pub rmse: f64,
    pub count: usize,
}

/// Equal-probability edges between the 1st and 99th percentile.
pub fn severity_edges(gt: &[f64], bins: usize) -> Result<Vec<f64>> {
    (0..=bins)
        .map(|k| lower_quantile(gt, 0.01 + 0.98 * k as f64 / bins as f64))
        .collect()
}

/// Severity-binned peak RMSE over `(gt_peak, pred_peak)` pairs. Peaks outside
/// the percentile range are left out; the last bin is closed on the right.
pub fn binned_peak_rmse(pairs: &[(f64, f64)], cfg: &BinnedConfig) -> Result<Vec<BinPoint>> {
    if cfg.bins == 0 || cfg.smooth_window == 0 {
        return Err(Error::InvalidConfig("bins and smoothing window must be positive".into()));
    }
    if pairs.len() < cfg.min_count.max(1) {
        return Err(Error::InvalidInput(format!("{} pairs, need at least {}", pairs.len(), cfg.min_count)));
    }
    let gt: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let edges = severity_edges(&gt, cfg.bins)?;
    let mut se = vec![0.0; cfg.bins];
    let mut count = vec![0usize; cfg.bins];
    for &(g, p) in pairs {
        if g < edges[0] || g > edges[cfg.bins] {
            continue;
        }
        let k = (0..cfg.bins)
            .find(|&k| g < edges[k + 1])
            .unwrap_or(cfg.bins - 1);
        se[k] += (p - g) * (p - g);
        count[k] += 1;
    }
    let raw: Vec<BinPoint> = (0..cfg.bins)
        .filter(|&k| count[k] >= cfg.min_count)
        .map(|k| BinPoint {
            bin_center: 0.5 * (edges[k] + edges[k + 1]),
            rmse: (se[k] / count[k] as f64).sqrt(),
            count: count[k],
        })
        .collect();
    if raw.is_empty() {
        return Err(Error::InvalidInput(format!("every severity bin has fewer than {} events", cfg.min_count)));
    }
    let half = cfg.smooth_window / 2;
    Ok((0..raw.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half).min(raw.len() - 1));
            let rmse = raw[a..=b].iter().map(|r| r.rmse).sum::<f64>() / (b - a + 1) as f64;
            BinPoint { rmse, ..raw[i] }
        })
        .collect())
}
