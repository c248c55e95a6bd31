use serde::{Deserialize, Serialize};

use super::series::HourlySeries;
use crate::error::{Error, Result};
use crate::loss::lower_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    /// Threshold quantile of the series.
    pub q: f64,
    /// Exceedances further apart than this start a new cluster.
    pub gap_h: i64,
    /// Minimum number of exceedance hours in a kept cluster.
    pub min_duration_h: usize,
    /// Largest peak-time offset of a kept pair.
    pub pair_tolerance_h: i64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            q: 0.95,
            gap_h: 24,
            min_duration_h: 3,
            pair_tolerance_h: 48,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig(format!("event quantile {} outside (0, 1)", self.q)));
        }
        if self.gap_h < 1 || self.min_duration_h < 1 || self.pair_tolerance_h < 0 {
            return Err(Error::InvalidConfig("gap and duration must be positive, tolerance non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEvent {
    /// First and last exceedance hour, inclusive.
    pub start: i64,
    pub end: i64,
    pub peak: f64,
    pub peak_time: i64,
    /// Exceedance hours in the cluster.
    pub exceedances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedPeak {
    pub gt: PeakEvent,
    pub pred: PeakEvent,
    /// `|t★_pred − t★_gt|`, hours.
    pub dt_h: i64,
}

/// `u_q` over the covered hours.
pub fn event_threshold(series: &HourlySeries, q: f64) -> Result<f64> {
    let vals: Vec<f64> = series.points().map(|p| p.1).collect();
    lower_quantile(&vals, q)
}

/// Clusters hours with `y > u` inside each covered segment; masked hours are
/// never bridged.
pub fn extract_events_above(series: &HourlySeries, u: f64, gap_h: i64, min_duration_h: usize) -> Vec<PeakEvent> {
    let mut events = Vec::new();
    for (i0, vals) in series.segments() {
        let hour = |i: usize| series.start + (i0 + i) as i64;
        let mut cluster: Vec<usize> = Vec::new();
        let mut flush = |cluster: &mut Vec<usize>| {
            if cluster.len() >= min_duration_h {
                let (a, b) = (cluster[0], *cluster.last().expect("non-empty"));
                let mut k = a;
                for i in a..=b {
                    if vals[i] > vals[k] {
                        k = i;
                    }
                }
                events.push(PeakEvent {
                    start: hour(a),
                    end: hour(b),
                    peak: vals[k],
                    peak_time: hour(k),
                    exceedances: cluster.len(),
                });
            }
            cluster.clear();
        };
        for (i, &y) in vals.iter().enumerate() {
            if y <= u {
                continue;
            }
            if cluster.last().is_some_and(|&l| (i - l) as i64 > gap_h) {
                flush(&mut cluster);
            }
            cluster.push(i);
        }
        flush(&mut cluster);
    }
    events
}

/// Threshold at the `q` quantile of the series, then cluster exceedances.
pub fn extract_events(series: &HourlySeries, q: f64, gap_h: i64, min_duration_h: usize) -> Result<Vec<PeakEvent>> {
    EventConfig {
        q,
        gap_h,
        min_duration_h,
        pair_tolerance_h: 0,
    }
    .validate()?;
    let u = event_threshold(series, q)?;
    Ok(extract_events_above(series, u, gap_h, min_duration_h))
}

/// Pairs the i-th ground-truth event with the i-th predicted one, then drops
/// pairs whose peak times differ by more than `tol_h`. Dropped pairs are not
/// re-paired.
pub fn pair_events(gt: &[PeakEvent], pred: &[PeakEvent], tol_h: i64) -> Vec<PairedPeak> {
    gt.iter()
        .zip(pred)
        .map(|(g, p)| PairedPeak {
            gt: *g,
            pred: *p,
            dt_h: (p.peak_time - g.peak_time).abs(),
        })
        .filter(|pp| pp.dt_h <= tol_h)
        .collect()
}
