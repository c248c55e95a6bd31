//! On-disk dataset layout: a JSON manifest plus one forcing CSV per snapshot
//! and one surge CSV per station and season.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{build_grid_graph, EdgeList, ForcingSnapshot, GridSpec};
use super::sample::{assemble_samples, AssembleOptions, Sample, SkipReport, StationMeta, SurgeSeries};
use super::synth::{synthesize, SynthConfig, SyntheticBlock};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Past,
    Future,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingRef {
    pub hour: i64,
    pub file: String,
}

/// Files of one winter season, named by its starting year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonEntry {
    pub year: i32,
    pub period: Period,
    pub forcing: Vec<ForcingRef>,
    /// Station id → surge file.
    pub surge: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub cadence_hours: u32,
    /// Calendar instant of hour 0.
    pub epoch: String,
    pub grid: GridSpec,
    pub stations: Vec<StationMeta>,
    pub seasons: Vec<SeasonEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticBlock>,
    /// Directory that file references are relative to.
    #[serde(skip)]
    pub root: PathBuf,
}

/// Float format with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_forcing_csv(path: &Path, snap: &ForcingSnapshot) -> Result<()> {
    let mut s = String::from("lat,lon,u,v,p\n");
    for i in 0..snap.lat.len() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(snap.lat[i]),
            fmt_f64(snap.lon[i]),
            fmt_f64(snap.u[i]),
            fmt_f64(snap.v[i]),
            fmt_f64(snap.p[i])
        ));
    }
    write_text(path, &s)
}

pub fn write_surge_csv(path: &Path, series: &SurgeSeries) -> Result<()> {
    let mut s = String::from("hour,surge_m\n");
    for (h, y) in series {
        s.push_str(&format!("{h},{}\n", fmt_f64(*y)));
    }
    write_text(path, &s)
}

fn csv_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if found != header {
        return Err(Error::parse(path, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    Ok(rdr)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("record {line}: cannot parse {s:?}")))
}

pub fn read_forcing_csv(path: &Path, hour: i64, grid: &GridSpec) -> Result<ForcingSnapshot> {
    let mut rdr = csv_reader(path, &["lat", "lon", "u", "v", "p"])?;
    let n = grid.node_count();
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != 5 {
            return Err(Error::parse(path, format!("record {line}: expected 5 fields")));
        }
        for (k, col) in cols.iter_mut().enumerate() {
            col.push(parse_field(path, line, &rec[k])?);
        }
    }
    if cols[0].len() != n {
        return Err(Error::parse(path, format!("{} rows for a {n}-node grid", cols[0].len())));
    }
    let [lat, lon, u, v, p] = cols;
    let snap = ForcingSnapshot {
        timestamp: hour,
        ny: grid.ny,
        nx: grid.nx,
        lat,
        lon,
        u,
        v,
        p,
    };
    snap.validate()?;
    Ok(snap)
}

pub fn read_surge_csv(path: &Path) -> Result<SurgeSeries> {
    let mut rdr = csv_reader(path, &["hour", "surge_m"])?;
    let mut out = SurgeSeries::new();
    let mut last = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::parse(path, format!("record {line}: expected 2 fields")));
        }
        let h: i64 = parse_field(path, line, &rec[0])?;
        let y: f64 = parse_field(path, line, &rec[1])?;
        if last.is_some_and(|l| h <= l) {
            return Err(Error::parse(path, format!("record {line}: hours must strictly increase")));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("{} hour {h}", path.display())));
        }
        last = Some(h);
        out.insert(h, y);
    }
    Ok(out)
}

/// Generates a synthetic dataset under `dir` and writes its manifest.
pub fn write_synthetic_dataset(dir: &Path, cfg: &SynthConfig, seed: u64) -> Result<DatasetManifest> {
    let (block, seasons) = synthesize(cfg, seed)?;
    let mut entries = Vec::with_capacity(seasons.len());
    for s in &seasons {
        let mut forcing = Vec::with_capacity(s.snapshots.len());
        for snap in &s.snapshots {
            let file = format!("forcing/{}/t{}.csv", s.year, snap.timestamp);
            write_forcing_csv(&dir.join(&file), snap)?;
            forcing.push(ForcingRef {
                hour: snap.timestamp,
                file,
            });
        }
        let mut surge = BTreeMap::new();
        for (id, series) in &s.surge {
            let file = format!("surge/{id}/{}.csv", s.year);
            write_surge_csv(&dir.join(&file), series)?;
            surge.insert(id.clone(), file);
        }
        entries.push(SeasonEntry {
            year: s.year,
            period: s.period,
            forcing,
            surge,
        });
    }
    let manifest = DatasetManifest {
        dataset_name: cfg.dataset_name.clone(),
        cadence_hours: cfg.cadence_hours,
        epoch: format!("{}-10-01T00:00:00Z", cfg.first_year),
        grid: cfg.grid,
        stations: cfg
            .stations
            .iter()
            .map(|s| StationMeta {
                id: s.id.clone(),
                lat: s.lat,
                lon: s.lon,
                elevation_m: s.elevation_m,
            })
            .collect(),
        seasons: entries,
        synthetic: Some(block),
        root: dir.to_path_buf(),
    };
    manifest.save()?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(&self.path(), &(text + "\n"))
    }

    /// Loads a manifest from a file or from a directory holding `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::parse(&file, e.to_string()))?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check_structure()?;
        Ok(m)
    }

    fn check_structure(&self) -> Result<()> {
        if self.cadence_hours != 3 && self.cadence_hours != 6 {
            return Err(Error::UnsupportedCadence(self.cadence_hours));
        }
        if self.grid.node_count() == 0 {
            return Err(Error::InvalidInput("manifest grid has zero extent".into()));
        }
        let mut ids: Vec<&str> = self.stations.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate station id in manifest".into()));
        }
        for s in &self.stations {
            if ![s.lat, s.lon, s.elevation_m].iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("station {} metadata", s.id)));
            }
        }
        let mut years: Vec<i32> = self.seasons.iter().map(|s| s.year).collect();
        years.sort_unstable();
        if years.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate season year in manifest".into()));
        }
        Ok(())
    }

    /// Parses every referenced file.
    pub fn validate_files(&self) -> Result<()> {
        for season in &self.seasons {
            for f in &season.forcing {
                read_forcing_csv(&self.root.join(&f.file), f.hour, &self.grid)?;
            }
            for file in season.surge.values() {
                read_surge_csv(&self.root.join(file))?;
            }
        }
        Ok(())
    }

    pub fn station(&self, id: &str) -> Result<&StationMeta> {
        self.stations
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("station {id:?} not in dataset {}", self.dataset_name)))
    }

    pub fn season(&self, year: i32) -> Result<&SeasonEntry> {
        self.seasons
            .iter()
            .find(|s| s.year == year)
            .ok_or_else(|| Error::InvalidInput(format!("season {year} not in dataset {}", self.dataset_name)))
    }

    pub fn years(&self) -> Vec<(i32, Period)> {
        self.seasons.iter().map(|s| (s.year, s.period)).collect()
    }

    pub fn edges(&self) -> Result<Arc<EdgeList>> {
        Ok(Arc::new(build_grid_graph(self.grid.ny, self.grid.nx)?))
    }

    pub fn load_forcing(&self, year: i32) -> Result<Vec<ForcingSnapshot>> {
        self.season(year)?
            .forcing
            .iter()
            .map(|f| read_forcing_csv(&self.root.join(&f.file), f.hour, &self.grid))
            .collect()
    }

    pub fn load_surge(&self, year: i32, station: &str) -> Result<SurgeSeries> {
        let season = self.season(year)?;
        let file = season
            .surge
            .get(station)
            .ok_or_else(|| Error::InvalidInput(format!("no surge file for station {station:?} in season {year}")))?;
        read_surge_csv(&self.root.join(file))
    }

    /// Samples of one station across the given seasons (all when `years` is
    /// `None`). Seasons are independent series.
    pub fn assemble(
        &self,
        station: &str,
        years: Option<&[i32]>,
        center_pressure: bool,
    ) -> Result<(Vec<Sample>, SkipReport)> {
        let meta = self.station(station)?.clone();
        let edges = self.edges()?;
        let mut samples = Vec::new();
        let mut report = SkipReport::default();
        for season in &self.seasons {
            if years.is_some_and(|ys| !ys.contains(&season.year)) {
                continue;
            }
            let snaps = self.load_forcing(season.year)?;
            let surge = self.load_surge(season.year, station)?;
            let opts = AssembleOptions {
                cadence_hours: self.cadence_hours,
                center_pressure,
                season: season.year,
            };
            let (s, r) = assemble_samples(&snaps, &surge, &meta, &edges, opts)?;
            samples.extend(s);
            report.merge(&r);
        }
        Ok((samples, report))
    }
}
