use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{HORIZON, ORIGIN_STEP_H};
use crate::error::{Error, Result};

/// Hourly values from `start`; hours with `mask[i] == false` carry no data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub start: i64,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl HourlySeries {
    /// Fully covered series.
    pub fn dense(start: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty hourly series".into()));
        }
        let mask = vec![true; values.len()];
        Ok(HourlySeries { start, values, mask })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn covered(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, hour: i64) -> Option<f64> {
        let i = usize::try_from(hour - self.start).ok()?;
        (i < self.values.len() && self.mask[i]).then(|| self.values[i])
    }

    /// `(hour, value)` for every covered hour.
    pub fn points(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (0..self.values.len())
            .filter(|&i| self.mask[i])
            .map(|i| (self.start + i as i64, self.values[i]))
    }

    /// Maximal runs of covered hours as `(first index, values)`.
    pub fn segments(&self) -> Vec<(usize, &[f64])> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.values.len() {
            if !self.mask[i] {
                i += 1;
                continue;
            }
            let s = i;
            while i < self.values.len() && self.mask[i] {
                i += 1;
            }
            out.push((s, &self.values[s..i]));
        }
        out
    }
}

/// Lays each origin's six values on hours `origin .. origin+5`. Windows on
/// the 6 h grid never overlap, so no value is averaged; missing origins leave
/// masked gaps.
pub fn reconstruct_hourly(preds: &[(i64, [f64; HORIZON])]) -> Result<HourlySeries> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions to reconstruct".into()));
    }
    let mut by_origin = BTreeMap::new();
    for (origin, v) in preds {
        if origin.rem_euclid(ORIGIN_STEP_H) != 0 {
            return Err(Error::InvalidInput(format!("origin {origin} is off the 6 h grid")));
        }
        if by_origin.insert(*origin, v).is_some() {
            return Err(Error::InvalidInput(format!("duplicate origin {origin}")));
        }
    }
    let start = *by_origin.keys().next().expect("non-empty");
    let last = *by_origin.keys().next_back().expect("non-empty");
    let len = (last - start) as usize + HORIZON;
    let mut values = vec![0.0; len];
    let mut mask = vec![false; len];
    for (origin, v) in by_origin {
        let i0 = (origin - start) as usize;
        values[i0..i0 + HORIZON].copy_from_slice(v);
        mask[i0..i0 + HORIZON].fill(true);
    }
    Ok(HourlySeries { start, values, mask })
}

/// `(pred, gt)` at every hour covered by both series.
pub fn aligned(pred: &HourlySeries, gt: &HourlySeries) -> Vec<(f64, f64)> {
    pred.points().filter_map(|(h, p)| gt.get(h).map(|g| (p, g))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn windows(origins: &[i64]) -> Vec<(i64, [f64; 6])> {
        origins
            .iter()
            .map(|&o| (o, std::array::from_fn(|h| (o + h as i64) as f64)))
            .collect()
    }

    #[test]
    fn three_origins_tile_eighteen_hours() {
        let s = reconstruct_hourly(&windows(&[0, 6, 12])).unwrap();
        assert_eq!((s.start, s.len(), s.covered()), (0, 18, 18));
        assert!(s.values.iter().enumerate().all(|(i, &v)| v == i as f64));
    }

    #[test]
    fn missing_origin_masks_six_hours() {
        let s = reconstruct_hourly(&windows(&[0, 12])).unwrap();
        assert_eq!(s.len(), 18);
        let masked: Vec<usize> = (0..18).filter(|&i| !s.mask[i]).collect();
        assert_eq!(masked, (6..12).collect::<Vec<_>>());
        assert_eq!(s.get(7), None);
        assert_eq!(s.get(13), Some(13.0));
        assert_eq!(s.segments().len(), 2);
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut w = windows(&[12, 0, 6]);
        let a = reconstruct_hourly(&w).unwrap();
        w.reverse();
        assert_eq!(a, reconstruct_hourly(&w).unwrap());
    }

    #[test]
    fn rejects_duplicates_and_off_grid_origins() {
        assert!(reconstruct_hourly(&windows(&[0, 6, 6])).is_err());
        assert!(reconstruct_hourly(&windows(&[0, 7])).is_err());
        assert!(reconstruct_hourly(&[]).is_err());
    }

    #[test]
    fn alignment_skips_uncovered_hours() {
        let p = reconstruct_hourly(&windows(&[0, 12])).unwrap();
        let g = HourlySeries::dense(3, vec![1.0; 20]).unwrap();
        let a = aligned(&p, &g);
        assert_eq!(a.len(), 3 + 6);
        assert_eq!(a[0], (3.0, 1.0));
    }
}
