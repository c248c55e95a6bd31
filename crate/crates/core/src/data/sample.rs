use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{EdgeList, ForcingGraph, ForcingSnapshot};
use crate::error::{Error, Result};

/// Input history length (t−12h, t−6h, t).
pub const INPUT_STEPS: usize = 3;
/// Output horizon length (t .. t+5h).
pub const HORIZON: usize = 6;
/// Origins sit on this grid; input snapshots are this far apart.
pub const ORIGIN_STEP_H: i64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub elevation_m: f64,
}

impl StationMeta {
    pub fn as_vector(&self) -> [f64; 3] {
        [self.lat, self.lon, self.elevation_m]
    }
}

/// Hourly surge at one station, keyed by hours since epoch.
pub type SurgeSeries = BTreeMap<i64, f64>;

#[derive(Debug, Clone)]
pub struct Sample {
    /// Emulation origin, hours since epoch (multiple of 6).
    pub origin: i64,
    /// Starting year of the winter season the sample belongs to.
    pub season: i32,
    /// `(G_{t−12h}, G_{t−6h}, G_t)`.
    pub graphs: [Arc<ForcingGraph>; INPUT_STEPS],
    pub station: StationMeta,
    /// Surge in meters at `t .. t+5h`.
    pub target: [f64; HORIZON],
    /// `max(target)`.
    pub peak: f64,
}

/// Why candidate origins did not become samples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    /// Origins in the first 12 h of a series, lacking forcing history.
    pub spin_up: usize,
    /// A required snapshot is missing inside the series.
    pub missing_forcing: usize,
    /// Target hours run past the end of the surge series.
    pub horizon_unavailable: usize,
    /// Target hours missing inside the surge series.
    pub missing_surge: usize,
}

impl SkipReport {
    pub fn merge(&mut self, other: &SkipReport) {
        self.spin_up += other.spin_up;
        self.missing_forcing += other.missing_forcing;
        self.horizon_unavailable += other.horizon_unavailable;
        self.missing_surge += other.missing_surge;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    pub cadence_hours: u32,
    pub center_pressure: bool,
    pub season: i32,
}

/// Builds one sample per 6 h origin whose three input snapshots and six target
/// hours all exist. Snapshots between the 6 h inputs (3 h cadence) are
/// ignored; nothing is interpolated.
pub fn assemble_samples(
    snapshots: &[ForcingSnapshot],
    surge: &SurgeSeries,
    station: &StationMeta,
    edges: &Arc<EdgeList>,
    opts: AssembleOptions,
) -> Result<(Vec<Sample>, SkipReport)> {
    if opts.cadence_hours != 3 && opts.cadence_hours != 6 {
        return Err(Error::UnsupportedCadence(opts.cadence_hours));
    }
    let mut report = SkipReport::default();
    let (Some(first), Some(last)) = (snapshots.first(), snapshots.last()) else {
        return Ok((Vec::new(), report));
    };
    if snapshots.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::InvalidInput("snapshot timestamps must strictly increase".into()));
    }
    let by_time: HashMap<i64, &ForcingSnapshot> = snapshots.iter().map(|s| (s.timestamp, s)).collect();
    let surge_end = surge.keys().next_back().copied();

    let mut graphs: HashMap<i64, Arc<ForcingGraph>> = HashMap::new();
    let mut graph_at = |t: i64| -> Result<Option<Arc<ForcingGraph>>> {
        if let Some(g) = graphs.get(&t) {
            return Ok(Some(g.clone()));
        }
        let Some(snap) = by_time.get(&t) else { return Ok(None) };
        let g = Arc::new(ForcingGraph::from_snapshot(snap, edges.clone(), opts.center_pressure)?);
        graphs.insert(t, g.clone());
        Ok(Some(g))
    };

    let mut samples = Vec::new();
    let mut t = first.timestamp.div_euclid(ORIGIN_STEP_H) * ORIGIN_STEP_H;
    if t < first.timestamp {
        t += ORIGIN_STEP_H;
    }
    while t <= last.timestamp {
        let origin = t;
        t += ORIGIN_STEP_H;
        if origin - 2 * ORIGIN_STEP_H < first.timestamp {
            report.spin_up += 1;
            continue;
        }
        let mut inputs = Vec::with_capacity(INPUT_STEPS);
        for k in (0..INPUT_STEPS as i64).rev() {
            if let Some(g) = graph_at(origin - k * ORIGIN_STEP_H)? {
                inputs.push(g);
            }
        }
        if inputs.len() != INPUT_STEPS {
            report.missing_forcing += 1;
            continue;
        }
        if surge_end.is_none_or(|end| origin + HORIZON as i64 - 1 > end) {
            report.horizon_unavailable += 1;
            continue;
        }
        let mut target = [0.0; HORIZON];
        let mut complete = true;
        for (h, slot) in target.iter_mut().enumerate() {
            match surge.get(&(origin + h as i64)) {
                Some(&y) => *slot = y,
                None => complete = false,
            }
        }
        if !complete {
            report.missing_surge += 1;
            continue;
        }
        let peak = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let graphs: [Arc<ForcingGraph>; INPUT_STEPS] = inputs.try_into().expect("three inputs");
        samples.push(Sample {
            origin,
            season: opts.season,
            graphs,
            station: station.clone(),
            target,
            peak,
        });
    }
    Ok((samples, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::graph::build_grid_graph;

    fn snap(t: i64) -> ForcingSnapshot {
        ForcingSnapshot {
            timestamp: t,
            ny: 2,
            nx: 2,
            lat: vec![40.0, 40.0, 40.5, 40.5],
            lon: vec![-74.0, -73.5, -74.0, -73.5],
            u: vec![t as f64; 4],
            v: vec![1.0, 2.0, 3.0, 4.0],
            p: vec![100000.0, 100100.0, 100200.0, 100300.0 + t as f64],
        }
    }

    fn station() -> StationMeta {
        StationMeta {
            id: "s".into(),
            lat: 40.2,
            lon: -73.8,
            elevation_m: 2.0,
        }
    }

    fn surge_to(end: i64) -> SurgeSeries {
        (0..=end).map(|h| (h, h as f64 * 0.01)).collect()
    }

    fn opts(cadence: u32) -> AssembleOptions {
        AssembleOptions {
            cadence_hours: cadence,
            center_pressure: true,
            season: 1979,
        }
    }

    #[test]
    fn six_hour_origins() {
        let edges = Arc::new(build_grid_graph(2, 2).unwrap());
        let snaps: Vec<_> = (0..=8).map(|k| snap(6 * k)).collect();
        let (s, rep) = assemble_samples(&snaps, &surge_to(53), &station(), &edges, opts(6)).unwrap();
        let origins: Vec<i64> = s.iter().map(|s| s.origin).collect();
        assert_eq!(origins, vec![12, 18, 24, 30, 36, 42, 48]);
        assert_eq!(rep.spin_up, 2);

        let (s, rep) = assemble_samples(&snaps, &surge_to(50), &station(), &edges, opts(6)).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(rep.horizon_unavailable, 1);
        for sm in &s {
            assert_eq!(sm.peak, sm.target.iter().copied().fold(f64::MIN, f64::max));
            assert!(sm.origin + 5 <= 50);
        }
    }

    #[test]
    fn three_hour_cadence_skips_intermediate_snapshots() {
        let edges = Arc::new(build_grid_graph(2, 2).unwrap());
        let snaps: Vec<_> = [0, 3, 6, 9, 12].into_iter().map(snap).collect();
        let (s, _) = assemble_samples(&snaps, &surge_to(30), &station(), &edges, opts(3)).unwrap();
        assert_eq!(s.len(), 1);
        let times: Vec<i64> = s[0].graphs.iter().map(|g| g.timestamp).collect();
        assert_eq!(times, vec![0, 6, 12]);
        // Graph features are the snapshots themselves: no interpolation.
        assert_eq!(s[0].graphs[1].features.get(0, 2), 6.0);
    }

    #[test]
    fn rejects_other_cadences() {
        let edges = Arc::new(build_grid_graph(2, 2).unwrap());
        let err = assemble_samples(&[snap(0)], &surge_to(10), &station(), &edges, opts(1)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedCadence(1)));
    }

    #[test]
    fn missing_snapshot_is_reported() {
        let edges = Arc::new(build_grid_graph(2, 2).unwrap());
        let snaps: Vec<_> = [0, 6, 12, 24, 30].into_iter().map(snap).collect();
        let (s, rep) = assemble_samples(&snaps, &surge_to(60), &station(), &edges, opts(6)).unwrap();
        // 18 missing: origins 18, 24, 30 all need it.
        assert_eq!(s.len(), 1);
        assert_eq!(rep.missing_forcing, 3);
    }

    #[test]
    fn never_emits_target_past_series_end() {
        let edges = Arc::new(build_grid_graph(2, 2).unwrap());
        let snaps: Vec<_> = (0..40).map(|k| snap(6 * k)).collect();
        for end in 0..260 {
            let surge = surge_to(end);
            let (s, _) = assemble_samples(&snaps, &surge, &station(), &edges, opts(6)).unwrap();
            for sm in &s {
                for h in 0..6 {
                    assert!(surge.contains_key(&(sm.origin + h)));
                }
            }
        }
    }
}
