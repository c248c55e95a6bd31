use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pact_core::data::{split_years, DatasetManifest, SplitProtocol};
use serde_json::Value;

fn pact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pact"))
        .args(args)
        .env_remove("PACT_EPOCHS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pact(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Tiny dataset: 4×4 grid, six 240 h seasons.
fn tiny_data(dir: &Path, seed: u64) -> PathBuf {
    let d = dir.join(format!("data{seed}"));
    ok(&[
        "gen-data", "--quiet", "--out", s(&d), "--seed", &seed.to_string(), "--grid", "4", "--season-hours", "240",
    ]);
    d
}

fn tiny_train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--quiet", "--dataset", s(data), "--out", s(out), "--epochs", "3", "--warmup-epochs", "1",
        "--batch-size", "16", "--d-model", "8", "--heads", "2", "--temporal-layers", "1",
    ];
    args.extend_from_slice(extra);
    pact(&args)
}

/// Every file under `dir` with its bytes, keyed by relative path.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_deterministic_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny_data(tmp.path(), 3);
    let b = tmp.path().join("again");
    ok(&["gen-data", "--quiet", "--out", s(&b), "--seed", "3", "--grid", "4", "--season-hours", "240"]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), tb.len());
    for ((pa, ba), (pb, bb)) in ta.iter().zip(&tb) {
        assert_eq!(pa, pb);
        if pa != Path::new("resolved_config.json") {
            assert_eq!(ba, bb, "{}", pa.display());
        }
    }
    let c = tiny_data(tmp.path(), 4);
    let surge = Path::new("surge/battery/1979.csv");
    assert_ne!(fs::read(a.join(surge)).unwrap(), fs::read(c.join(surge)).unwrap());
}

#[test]
fn gen_data_is_byte_identical_at_the_same_path() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny_data(tmp.path(), 5);
    let first = tree(&a);
    fs::remove_dir_all(&a).unwrap();
    tiny_data(tmp.path(), 5);
    assert_eq!(first, tree(&a));
}

#[test]
fn long_record_supports_both_protocols() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("long");
    ok(&[
        "gen-data", "--quiet", "--out", s(&d), "--years", "36", "--future-years", "30", "--grid", "3",
        "--season-hours", "48",
    ]);
    let m = DatasetManifest::load(&d).unwrap();
    let past = split_years(&m.years(), &SplitProtocol::PastOnly).unwrap();
    assert_eq!((past.train.len(), past.val.len(), past.test.len()), (22, 7, 7));
    let fut = split_years(&m.years(), &SplitProtocol::FuturePeriod).unwrap();
    assert_eq!((fut.train.len(), fut.val.len(), fut.test.len()), (30, 6, 30));
}

#[test]
fn train_writes_artifacts_for_every_model() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), 1);
    for model in ["pact", "stgnn", "simple_gnn"] {
        let out = tmp.path().join(model);
        let r = tiny_train(&data, &out, &["--model", model]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        for f in ["checkpoint.json", "history.csv", "summary.json", "resolved_config.json"] {
            assert!(out.join(f).exists(), "{model}: {f}");
        }
        let summary = json(&out.join("summary.json"));
        assert_eq!(summary["model"], model);
        assert!(summary["test"]["overall"]["rmse"].as_f64().unwrap() > 0.0);
        let history = fs::read_to_string(out.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 4);
    }
}

#[test]
fn no_center_pressure_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), 1);
    let out = tmp.path().join("raw_p");
    assert!(tiny_train(&data, &out, &["--no-center-pressure"]).status.success());
    assert_eq!(json(&out.join("resolved_config.json"))["center_pressure"], false);
    assert_eq!(json(&out.join("checkpoint.json"))["center_pressure"], false);
}

#[test]
fn mse_flag_equals_zero_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), 2);
    let a = tmp.path().join("mse");
    let b = tmp.path().join("zero");
    assert!(tiny_train(&data, &a, &["--loss", "mse"]).status.success());
    assert!(tiny_train(&data, &b, &["--loss", "peak_aware", "--lambda-tail", "0", "--lambda-slope", "0"])
        .status
        .success());
    assert_eq!(fs::read(a.join("checkpoint.json")).unwrap(), fs::read(b.join("checkpoint.json")).unwrap());
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&a.join("history.csv")), strip(&b.join("history.csv")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), 1);
    let out = tmp.path().join("x");
    assert_eq!(tiny_train(&data, &out, &["--model", "transformer"]).status.code(), Some(2));
    assert_eq!(tiny_train(&data, &out, &["--epochs", "1"]).status.code(), Some(2));
    assert_eq!(pact(&["train", "--out", s(&out)]).status.code(), Some(2));
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"train\": {\"epochs\": \"many\"}}").unwrap();
    assert_eq!(pact(&["train", "--config", s(&bad), "--dataset", s(&data)]).status.code(), Some(2));
    // A learning rate this large overflows the parameters on the first step.
    assert_eq!(tiny_train(&data, &out, &["--lr", "1e300"]).status.code(), Some(3));
}

#[test]
fn environment_overrides_the_file_and_flags_override_both() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), 1);
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"train": {"epochs": 9, "warmup_epochs": 1, "batch_size": 64}, "pact": {"d_model": 8, "heads": 2, "ff_width": 16, "temporal_layers": 1}}"#).unwrap();
    let run = |out: &Path, env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_pact"));
        c.args(["train", "--quiet", "--config", s(&cfg), "--dataset", s(&data), "--out", s(out)]).args(extra);
        match env {
            Some(v) => c.env("PACT_EPOCHS", v),
            None => c.env_remove("PACT_EPOCHS"),
        };
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        json(&out.join("resolved_config.json"))["train"]["epochs"].as_u64().unwrap()
    };
    assert_eq!(run(&tmp.path().join("a"), None, &["--epochs", "2"]), 2);
    assert_eq!(run(&tmp.path().join("b"), Some("3"), &[]), 3);
    assert_eq!(run(&tmp.path().join("c"), Some("3"), &["--epochs", "2"]), 2);
}

fn hours(path: &Path) -> BTreeSet<i64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn predict_covers_the_season_minus_spin_up_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tiny_data(tmp.path(), 1);
    let run = tmp.path().join("run");
    assert!(tiny_train(&data, &run, &[]).status.success());
    let ck = run.join("checkpoint.json");
    let (p1, p2) = (tmp.path().join("p1"), tmp.path().join("p2"));
    ok(&["predict", "--quiet", "--checkpoint", s(&ck), "--dataset", s(&data), "--out", s(&p1)]);
    ok(&["predict", "--quiet", "--checkpoint", s(&ck), "--dataset", s(&data), "--out", s(&p2), "--years", "1981"]);

    let m = DatasetManifest::load(&data).unwrap();
    for (year, _) in m.years() {
        let file = format!("predictions_{year}.csv");
        let surge = hours(&data.join(format!("surge/battery/{year}.csv")));
        let season = m.season(year).unwrap();
        let first_forcing = season.forcing[0].hour;
        let last_forcing = season.forcing.last().unwrap().hour;
        let last_surge = *surge.last().unwrap();
        // Hours whose 6 h window has full input history and full targets.
        let want: BTreeSet<i64> = surge
            .iter()
            .copied()
            .filter(|h| {
                let o = h.div_euclid(6) * 6;
                o - 12 >= first_forcing && o <= last_forcing && o + 5 <= last_surge
            })
            .collect();
        assert_eq!(hours(&p1.join(&file)), want, "{year}");
    }
    assert_eq!(fs::read(p1.join("predictions_1981.csv")).unwrap(), fs::read(p2.join("predictions_1981.csv")).unwrap());
    assert!(!p2.join("predictions_1980.csv").exists());
}

#[test]
fn predict_transfers_across_datasets_with_matching_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny_data(tmp.path(), 1);
    let b = tiny_data(tmp.path(), 2);
    let run = tmp.path().join("run");
    assert!(tiny_train(&a, &run, &[]).status.success());
    let ck = run.join("checkpoint.json");
    let out = tmp.path().join("transfer");
    ok(&["predict", "--quiet", "--checkpoint", s(&ck), "--dataset", s(&b), "--out", s(&out), "--years", "1984"]);
    assert!(out.join("predictions_1984.csv").exists());

    let other = tmp.path().join("grid5");
    ok(&["gen-data", "--quiet", "--out", s(&other), "--grid", "5", "--season-hours", "240"]);
    let r = pact(&["predict", "--quiet", "--checkpoint", s(&ck), "--dataset", s(&other), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let r = pact(&["predict", "--quiet", "--checkpoint", s(&tmp.path().join("nope.json")), "--dataset", s(&b)]);
    assert_eq!(r.status.code(), Some(2));
}

fn write_series(path: &Path, col: &str, vals: &[(i64, f64)]) {
    let mut t = format!("hour,{col}\n");
    for (h, v) in vals {
        t.push_str(&format!("{h},{v}\n"));
    }
    fs::write(path, t).unwrap();
}

#[test]
fn evaluate_reports_and_validates_against_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let gt: Vec<(i64, f64)> = (0..600).map(|h| (h, (h as f64 * 0.05).sin().max(0.0))).collect();
    let gp = tmp.path().join("gt.csv");
    write_series(&gp, "surge_m", &gt);
    let out = tmp.path().join("same");
    ok(&["evaluate", "--quiet", "--pred", s(&gp), "--gt", s(&gp), "--out", s(&out)]);
    let report = json(&out.join("metrics.json"));
    let mut numbers = 0;
    assert_eq!(report["overall"]["rmse"], 0.0);
    assert_eq!(report["overall"]["mae"], 0.0);
    numbers += 2;
    let blocks = report["peak"].as_array().unwrap();
    assert_eq!(blocks.len(), 3);
    for b in blocks {
        for k in ["rmse", "mae", "mean_signed_error", "max_abs_error"] {
            assert_eq!(b[k], 0.0);
            numbers += 1;
        }
    }
    assert_eq!(numbers, 14);

    let schema: Value = serde_json::from_str(include_str!("../schemas/metrics.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert!(validator.is_valid(&report));

    let pred: Vec<(i64, f64)> = gt.iter().map(|&(h, v)| (h, 0.9 * v - 0.01)).collect();
    let pp = tmp.path().join("pred.csv");
    write_series(&pp, "pred_m", &pred);
    let out = tmp.path().join("biased");
    ok(&["evaluate", "--quiet", "--pred", s(&pp), "--gt", s(&gp), "--out", s(&out), "--subset", "sample"]);
    let report = json(&out.join("metrics.json"));
    assert!(validator.is_valid(&report));
    assert_eq!(report["subset"], "sample");
    assert!(report["peak"][1]["mean_signed_error"].as_f64().unwrap() < 0.0);
    let mut broken = report.clone();
    broken["peak"][0].as_object_mut().unwrap().remove("rmse");
    assert!(!validator.is_valid(&broken));

    let shifted: Vec<(i64, f64)> = (1000..1100).map(|h| (h, 0.0)).collect();
    let sp = tmp.path().join("shifted.csv");
    write_series(&sp, "pred_m", &shifted);
    let r = pact(&["evaluate", "--quiet", "--pred", s(&sp), "--gt", s(&gp), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
}

/// Ground truth with a handful of clear storms over a weak oscillation.
fn eventful(n: i64) -> Vec<(i64, f64)> {
    (0..n)
        .map(|h| {
            let storm: f64 = [150.0, 420.0, 700.0, 1010.0, 1300.0, 1620.0]
                .iter()
                .enumerate()
                .map(|(k, c)| (0.4 + 0.1 * k as f64) * (-((h as f64 - c) / 6.0).powi(2)).exp())
                .sum();
            (h, 0.05 * (h as f64 * 0.3).sin() + storm)
        })
        .collect()
}

#[test]
fn diagnose_peaks_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = eventful(1800);
    let gp = tmp.path().join("gt.csv");
    write_series(&gp, "surge_m", &gt);
    let pred: Vec<(i64, f64)> = gt.iter().map(|&(h, v)| (h, 0.8 * v)).collect();
    let pp = tmp.path().join("pred.csv");
    write_series(&pp, "pred_m", &pred);

    let run = |out: &Path, extra: &[&str]| {
        let mut a = vec!["diagnose-peaks", "--quiet", "--pred", s(&pp), "--gt", s(&gp), "--out", s(out)];
        a.extend_from_slice(extra);
        ok(&a);
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a, &[]);
    run(&b, &[]);
    for f in ["peak_pairs.csv", "density.csv", "binned_rmse.csv", "scatter.svg", "density.svg", "severity.svg", "diagnostics.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join("EMPTY").exists());
    let pairs = fs::read_to_string(a.join("peak_pairs.csv")).unwrap();
    assert!(pairs.starts_with("gt_peak,pred_peak,gt_time,pred_time\n"));
    assert_eq!(pairs.lines().count(), 7);
    let density = fs::read_to_string(a.join("density.csv")).unwrap();
    assert!(density.starts_with("x,f_gt,f_model\n"));

    let ev = &json(&a.join("resolved_config.json"))["eval"]["events"];
    assert_eq!((ev["q"].as_f64(), ev["gap_h"].as_i64()), (Some(0.95), Some(24)));
    assert_eq!((ev["min_duration_h"].as_i64(), ev["pair_tolerance_h"].as_i64()), (Some(3), Some(48)));
}

#[test]
fn flat_prediction_gives_an_honest_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = eventful(1800);
    let gp = tmp.path().join("gt.csv");
    write_series(&gp, "surge_m", &gt);
    let pp = tmp.path().join("flat.csv");
    write_series(&pp, "pred_m", &gt.iter().map(|&(h, _)| (h, 0.0)).collect::<Vec<_>>());
    let out = tmp.path().join("d");
    ok(&["diagnose-peaks", "--quiet", "--pred", s(&pp), "--gt", s(&gp), "--out", s(&out)]);
    assert!(out.join("EMPTY").exists());
    let d = json(&out.join("diagnostics.json"));
    assert_eq!(d["pairs"], 0);
    assert_eq!(d["seasons"][0]["pred_events"], 0);
    assert!(d["seasons"][0]["gt_events"].as_u64().unwrap() > 0);
    assert_eq!(fs::read_to_string(out.join("peak_pairs.csv")).unwrap().lines().count(), 1);
}
