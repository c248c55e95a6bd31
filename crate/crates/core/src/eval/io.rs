//! CSV artifacts of the evaluation stage.

use std::fs;
use std::path::Path;

use super::diagnostics::BinPoint;
use super::events::PairedPeak;
use super::series::HourlySeries;
use crate::data::fmt_f64;
use crate::data::manifest::write_text;
use crate::error::{Error, Result};

/// Writes covered hours as `hour,<column>`.
pub fn write_series_csv(path: &Path, series: &HourlySeries, column: &str) -> Result<()> {
    let mut s = format!("hour,{column}\n");
    for (h, y) in series.points() {
        s.push_str(&format!("{h},{}\n", fmt_f64(y)));
    }
    write_text(path, &s)
}

/// Reads a two-column `hour,<value>` file. Hours must strictly increase;
/// skipped hours become masked.
pub fn read_series_csv(path: &Path) -> Result<HourlySeries> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let header = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if header.len() != 2 || header[0].trim() != "hour" {
        return Err(Error::parse(path, "expected a header `hour,<value>`"));
    }
    let mut points: Vec<(i64, f64)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let parse_err = || Error::parse(path, format!("record {line}: malformed"));
        let h: i64 = rec[0].trim().parse().map_err(|_| parse_err())?;
        let y: f64 = rec[1].trim().parse().map_err(|_| parse_err())?;
        if points.last().is_some_and(|&(l, _)| h <= l) {
            return Err(Error::parse(path, format!("record {line}: hours must strictly increase")));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("{} hour {h}", path.display())));
        }
        points.push((h, y));
    }
    let (Some(&(start, _)), Some(&(last, _))) = (points.first(), points.last()) else {
        return Err(Error::parse(path, "no rows"));
    };
    let len = (last - start + 1) as usize;
    let mut values = vec![0.0; len];
    let mut mask = vec![false; len];
    for (h, y) in points {
        let i = (h - start) as usize;
        values[i] = y;
        mask[i] = true;
    }
    Ok(HourlySeries { start, values, mask })
}

pub fn write_pairs_csv(path: &Path, pairs: &[PairedPeak]) -> Result<()> {
    let mut s = String::from("gt_peak,pred_peak,gt_time,pred_time\n");
    for p in pairs {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.gt.peak),
            fmt_f64(p.pred.peak),
            p.gt.peak_time,
            p.pred.peak_time
        ));
    }
    write_text(path, &s)
}

/// `x,f_gt,f_<name>…` with one density column per model.
pub fn write_density_csv(path: &Path, grid: &[f64], gt: &[f64], models: &[(&str, &[f64])]) -> Result<()> {
    let mut s = String::from("x,f_gt");
    for (name, _) in models {
        s.push_str(&format!(",f_{name}"));
    }
    s.push('\n');
    for (i, x) in grid.iter().enumerate() {
        s.push_str(&format!("{},{}", fmt_f64(*x), fmt_f64(gt[i])));
        for (_, f) in models {
            s.push_str(&format!(",{}", fmt_f64(f[i])));
        }
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn write_binned_csv(path: &Path, bins: &[BinPoint]) -> Result<()> {
    let mut s = String::from("bin_center,rmse,count\n");
    for b in bins {
        s.push_str(&format!("{},{},{}\n", fmt_f64(b.bin_center), fmt_f64(b.rmse), b.count));
    }
    write_text(path, &s)
}
