use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pact_core::data::{apply_norm_all, prepare_splits, write_synthetic_dataset, DatasetManifest, Sample, YearSplit};
use pact_core::eval::io::{read_series_csv, write_binned_csv, write_density_csv, write_pairs_csv, write_series_csv};
use pact_core::eval::svg::{Mark, Plot, Series};
use pact_core::eval::{
    aligned, binned_peak_rmse, density_grid, extract_events, kde_density, metrics_report, pair_events,
    reconstruct_hourly, silverman_bandwidth, BinPoint, HourlySeries, MetricsReport, PairedPeak,
};
use pact_core::loss::lower_quantile;
use pact_core::model::{Checkpoint, Model};
use pact_core::train::{train as fit, EpochRecord};
use pact_core::{Error, Result};
use serde::Serialize;

use crate::config::{write_json, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EMPTY_MARKER: &str = "EMPTY";

pub struct Log {
    pub quiet: bool,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn dataset_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("no dataset given (--dataset or `dataset` in the config)".into()))
}

#[derive(Debug, Serialize)]
struct StationSummary {
    id: String,
    samples: usize,
    /// Peak-score quantiles at 0.5, 0.9, 0.95, 0.99 and the maximum.
    peak_quantiles: [f64; 5],
}

pub fn gen_data(cfg: &RunConfig, log: &Log) -> Result<()> {
    cfg.synth.validate()?;
    let manifest = write_synthetic_dataset(&cfg.out, &cfg.synth, cfg.seed)?;
    cfg.write_resolved(&cfg.out)?;
    let years: Vec<String> = manifest
        .years()
        .iter()
        .map(|(y, p)| format!("{y} ({})", if *p == pact_core::data::Period::Past { "past" } else { "future" }))
        .collect();
    println!("dataset {} at {}", manifest.dataset_name, cfg.out.display());
    println!("seasons: {}", years.join(", "));
    for st in &manifest.stations {
        let (samples, _) = manifest.assemble(&st.id, None, true)?;
        let peaks: Vec<f64> = samples.iter().map(|s| s.peak).collect();
        if peaks.is_empty() {
            println!("station {}: no samples", st.id);
            continue;
        }
        let q = |p: f64| lower_quantile(&peaks, p);
        let s = StationSummary {
            id: st.id.clone(),
            samples: samples.len(),
            peak_quantiles: [q(0.5)?, q(0.9)?, q(0.95)?, q(0.99)?, q(1.0)?],
        };
        println!(
            "station {}: {} samples, peak p50 {:.3} p90 {:.3} p95 {:.3} p99 {:.3} max {:.3} m",
            s.id, s.samples, s.peak_quantiles[0], s.peak_quantiles[1], s.peak_quantiles[2], s.peak_quantiles[3], s.peak_quantiles[4]
        );
    }
    log.info("done");
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model: String,
    station: String,
    years: YearSplit,
    train_samples: usize,
    val_samples: usize,
    test_samples: usize,
    initial_val_rmse: f64,
    best_epoch: usize,
    best_val_rmse: f64,
    tau_tail: f64,
    train_seconds: f64,
    test: Option<MetricsReport>,
}

/// Hourly prediction and ground-truth series of `samples`.
fn hourly_pair(model: &Model, samples: &[Sample], batch: usize) -> Result<(HourlySeries, HourlySeries)> {
    let preds = model.predict(samples, batch)?;
    let p: Vec<_> = samples.iter().zip(preds).map(|(s, y)| (s.origin, y)).collect();
    let g: Vec<_> = samples.iter().map(|s| (s.origin, s.target)).collect();
    Ok((reconstruct_hourly(&p)?, reconstruct_hourly(&g)?))
}

pub fn train(cfg: &RunConfig, log: &Log) -> Result<()> {
    let manifest = DatasetManifest::load(dataset_path(cfg)?)?;
    let ids: Vec<String> = manifest.stations.iter().map(|s| s.id.clone()).collect();
    let station = cfg.station_or_first(&ids)?;
    let tc = cfg.effective_train();
    tc.validate()?;
    cfg.pact.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    cfg.write_resolved(&cfg.out)?;

    let prep = prepare_splits(&manifest, &station, &cfg.split, cfg.center_pressure, None)?;
    log.info(format!(
        "{} on {station}: {} train / {} val / {} test samples",
        cfg.model,
        prep.train.len(),
        prep.val.len(),
        prep.test.len()
    ));
    let model = Model::init(cfg.model, cfg.pact.clone(), cfg.seed)?;
    let start = Instant::now();
    let outcome = fit(model, &prep.train, &prep.val, &tc, |r: &EpochRecord| {
        log.info(format!(
            "epoch {:>3}  loss {:.3e}  mse {:.3e}  val_rmse {:.4}  lr {:.2e}  {:.1}s",
            r.epoch, r.total, r.mse, r.val_rmse, r.lr, r.seconds
        ))
    })?;
    let train_seconds = start.elapsed().as_secs_f64();

    let meta = manifest.station(&station)?.clone();
    outcome
        .checkpoint(meta, manifest.grid, cfg.center_pressure, prep.norm.clone())
        .save(&cfg.out.join(CHECKPOINT_FILE))?;
    outcome.history.write_csv(&cfg.out.join(HISTORY_FILE))?;

    let test = if prep.test.is_empty() {
        None
    } else {
        let (p, g) = hourly_pair(&outcome.best, &prep.test, cfg.predict_batch_size)?;
        Some(metrics_report(&p, &g, &cfg.eval.fractions, cfg.eval.subset)?)
    };
    if let Some(t) = &test {
        println!("test rmse {:.5} mae {:.5} m", t.overall.rmse, t.overall.mae);
    }
    let summary = TrainSummary {
        model: cfg.model.to_string(),
        station,
        years: prep.years.clone(),
        train_samples: prep.train.len(),
        val_samples: prep.val.len(),
        test_samples: prep.test.len(),
        initial_val_rmse: outcome.history.initial_val_rmse,
        best_epoch: outcome.best_epoch,
        best_val_rmse: outcome.best_val_rmse,
        tau_tail: outcome.tau_tail,
        train_seconds,
        test,
    };
    write_json(&cfg.out.join(SUMMARY_FILE), &summary)
}

#[derive(Debug, Serialize)]
struct PredictTiming {
    year: i32,
    hours: usize,
    seconds: f64,
}

pub fn predictions_file(year: i32) -> String {
    format!("predictions_{year}.csv")
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path, years: &[i32], log: &Log) -> Result<()> {
    let ck = Checkpoint::load(checkpoint).map_err(|e| match e {
        Error::Io { .. } | Error::Checkpoint(_) => Error::InvalidInput(e.to_string()),
        other => other,
    })?;
    let manifest = DatasetManifest::load(dataset_path(cfg)?)?;
    if (manifest.grid.ny, manifest.grid.nx) != (ck.grid.ny, ck.grid.nx) {
        return Err(Error::InvalidInput(format!(
            "checkpoint grid {}x{} does not match dataset grid {}x{}",
            ck.grid.ny, ck.grid.nx, manifest.grid.ny, manifest.grid.nx
        )));
    }
    let station = cfg.station.clone().unwrap_or_else(|| ck.station.id.clone());
    manifest.station(&station)?;
    let model = ck.model()?;
    let years: Vec<i32> = if years.is_empty() {
        manifest.years().into_iter().map(|(y, _)| y).collect()
    } else {
        years.to_vec()
    };
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    cfg.write_resolved(&cfg.out)?;
    let mut timing = Vec::with_capacity(years.len());
    for year in years {
        let start = Instant::now();
        let (samples, _) = manifest.assemble(&station, Some(&[year]), ck.center_pressure)?;
        if samples.is_empty() {
            return Err(Error::InvalidInput(format!("season {year} yields no samples for {station}")));
        }
        let samples = apply_norm_all(&samples, &ck.norm);
        let preds = model.predict(&samples, cfg.predict_batch_size)?;
        let series = reconstruct_hourly(&samples.iter().zip(preds).map(|(s, y)| (s.origin, y)).collect::<Vec<_>>())?;
        if series.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("predictions for season {year}")));
        }
        let seconds = start.elapsed().as_secs_f64();
        write_series_csv(&cfg.out.join(predictions_file(year)), &series, "pred_m")?;
        log.info(format!("season {year}: {} hours in {seconds:.2}s", series.covered()));
        timing.push(PredictTiming {
            year,
            hours: series.covered(),
            seconds,
        });
    }
    write_json(&cfg.out.join("timing.json"), &timing)
}

pub fn evaluate(cfg: &RunConfig, pred: &Path, gt: &Path, log: &Log) -> Result<()> {
    let p = read_series_csv(pred)?;
    let g = read_series_csv(gt)?;
    if let Some((h, _)) = p.points().find(|(h, _)| g.get(*h).is_none()) {
        return Err(Error::InvalidInput(format!("prediction hour {h} has no ground truth")));
    }
    let report = metrics_report(&p, &g, &cfg.eval.fractions, cfg.eval.subset)?;
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    cfg.write_resolved(&cfg.out)?;
    write_json(&cfg.out.join(METRICS_FILE), &report)?;
    println!("rmse {:.5} mae {:.5} m over {} hours", report.overall.rmse, report.overall.mae, report.overall.hours);
    for b in &report.peak {
        println!(
            "top {:>4.1}%: rmse {:.5} mae {:.5} mserr {:+.5} maxabs {:.5}",
            100.0 * b.fraction,
            b.rmse,
            b.mae,
            b.mean_signed_error,
            b.max_abs_error
        );
    }
    log.info(format!("wrote {}", cfg.out.join(METRICS_FILE).display()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct SeasonEvents {
    pred: PathBuf,
    gt: PathBuf,
    gt_threshold: f64,
    pred_threshold: f64,
    gt_events: usize,
    pred_events: usize,
    pairs: usize,
}

#[derive(Debug, Serialize)]
struct DiagnosticsSummary {
    seasons: Vec<SeasonEvents>,
    pairs: usize,
    bandwidth: Option<f64>,
    binned_bins: usize,
    binned_note: Option<String>,
}

pub fn diagnose_peaks(cfg: &RunConfig, preds: &[PathBuf], gts: &[PathBuf], label: &str, log: &Log) -> Result<()> {
    let ev = cfg.eval.events;
    ev.validate()?;
    if preds.len() != gts.len() {
        return Err(Error::InvalidInput(format!("{} prediction files for {} ground-truth files", preds.len(), gts.len())));
    }
    let mut seasons = Vec::new();
    let mut pairs: Vec<PairedPeak> = Vec::new();
    for (pp, gp) in preds.iter().zip(gts) {
        let p = read_series_csv(pp)?;
        let g = read_series_csv(gp)?;
        // Ground truth restricted to the hours the prediction covers.
        let both: BTreeMap<i64, f64> = p.points().filter_map(|(h, _)| g.get(h).map(|v| (h, v))).collect();
        if both.is_empty() || aligned(&p, &g).len() != p.covered() {
            return Err(Error::InvalidInput(format!("{} and {} are not aligned", pp.display(), gp.display())));
        }
        let mut gr = p.clone();
        for (i, v) in gr.values.iter_mut().enumerate() {
            if let Some(&x) = both.get(&(p.start + i as i64)) {
                *v = x;
            }
        }
        let ge = extract_events(&gr, ev.q, ev.gap_h, ev.min_duration_h)?;
        let pe = extract_events(&p, ev.q, ev.gap_h, ev.min_duration_h)?;
        let paired = pair_events(&ge, &pe, ev.pair_tolerance_h);
        seasons.push(SeasonEvents {
            pred: pp.clone(),
            gt: gp.clone(),
            gt_threshold: pact_core::eval::event_threshold(&gr, ev.q)?,
            pred_threshold: pact_core::eval::event_threshold(&p, ev.q)?,
            gt_events: ge.len(),
            pred_events: pe.len(),
            pairs: paired.len(),
        });
        pairs.extend(paired);
    }
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    cfg.write_resolved(out)?;
    write_pairs_csv(&out.join("peak_pairs.csv"), &pairs)?;
    let marker = out.join(EMPTY_MARKER);
    let mut summary = DiagnosticsSummary {
        seasons,
        pairs: pairs.len(),
        bandwidth: None,
        binned_bins: 0,
        binned_note: None,
    };
    if pairs.is_empty() {
        write_density_csv(&out.join("density.csv"), &[], &[], &[(label, &[])])?;
        write_binned_csv(&out.join("binned_rmse.csv"), &[])?;
        fs::write(&marker, "no paired peak events\n").map_err(|e| io_err(&marker, e))?;
        summary.binned_note = Some("no paired peak events".into());
        println!("no paired peak events; wrote empty bundle");
        return write_json(&out.join("diagnostics.json"), &summary);
    }
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?;
    }

    let gt_peaks: Vec<f64> = pairs.iter().map(|p| p.gt.peak).collect();
    let pred_peaks: Vec<f64> = pairs.iter().map(|p| p.pred.peak).collect();
    let bw = silverman_bandwidth(&gt_peaks)?;
    let all: Vec<f64> = gt_peaks.iter().chain(&pred_peaks).copied().collect();
    let grid = density_grid(&all, bw, cfg.eval.density_points);
    let f_gt = kde_density(&gt_peaks, bw, &grid)?;
    let f_model = kde_density(&pred_peaks, bw, &grid)?;
    write_density_csv(&out.join("density.csv"), &grid, &f_gt, &[(label, &f_model)])?;
    summary.bandwidth = Some(bw);

    let xy: Vec<(f64, f64)> = pairs.iter().map(|p| (p.gt.peak, p.pred.peak)).collect();
    let bins: Vec<BinPoint> = match binned_peak_rmse(&xy, &cfg.eval.binned) {
        Ok(b) => b,
        Err(Error::InvalidInput(msg)) => {
            summary.binned_note = Some(msg);
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    summary.binned_bins = bins.len();
    write_binned_csv(&out.join("binned_rmse.csv"), &bins)?;

    let svg = |name: &str, plot: Plot| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, plot.render()).map_err(|e| io_err(&path, e))
    };
    svg(
        "scatter.svg",
        Plot {
            title: "Event peaks".into(),
            x_label: "ground-truth peak (m)".into(),
            y_label: "predicted peak (m)".into(),
            series: vec![Series {
                label: label.into(),
                mark: Mark::Points,
                xy: xy.clone(),
            }],
            identity: true,
        },
    )?;
    svg(
        "density.svg",
        Plot {
            title: format!("Peak densities (bandwidth {bw:.4} m)"),
            x_label: "peak (m)".into(),
            y_label: "density".into(),
            series: vec![
                Series {
                    label: "ground truth".into(),
                    mark: Mark::Line,
                    xy: grid.iter().copied().zip(f_gt).collect(),
                },
                Series {
                    label: label.into(),
                    mark: Mark::Line,
                    xy: grid.iter().copied().zip(f_model).collect(),
                },
            ],
            identity: false,
        },
    )?;
    svg(
        "severity.svg",
        Plot {
            title: "Peak RMSE by severity".into(),
            x_label: "ground-truth peak (m)".into(),
            y_label: "RMSE (m)".into(),
            series: vec![Series {
                label: label.into(),
                mark: Mark::Line,
                xy: bins.iter().map(|b| (b.bin_center, b.rmse)).collect(),
            }],
            identity: false,
        },
    )?;
    println!("{} paired events, bandwidth {bw:.4} m, {} severity bins", pairs.len(), bins.len());
    log.info(format!("wrote diagnostics to {}", out.display()));
    write_json(&out.join("diagnostics.json"), &summary)
}
