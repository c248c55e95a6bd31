//! Synthetic winter seasons with an analytic forcing→surge response.
//!
//! Forcing is a spatially uniform background flow (with the pressure gradient
//! that balances it geostrophically and a uniform pressure swing) plus moving
//! low-pressure systems. Each low has a Gaussian pressure deficit and a
//! counter-clockwise vortex whose speed peaks at the storm radius.
//!
//! Surge at a station is driven by
//! `ib · p′(t) + wind · Σ_k w_k (u, v)(t−k) · n̂`, smoothed by a first-order
//! autoregression and perturbed by Gaussian observation noise. Every
//! coefficient, storm and noise seed is written into the manifest so the
//! targets can be recomputed from it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::graph::{ForcingSnapshot, GridSpec};
use super::manifest::Period;
use crate::error::{Error, Result};

pub const HOURS_PER_YEAR: i64 = 8760;
const METERS_PER_DEGREE: f64 = 111_000.0;
const AIR_DENSITY: f64 = 1.2;
const CORIOLIS: f64 = 1e-4;
const REFERENCE_PRESSURE: f64 = 101_325.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub elevation_m: f64,
    /// Unit vector (east, north) along which wind pushes water onshore.
    pub onshore_normal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCoefficients {
    /// Inverse-barometer gain, m per Pa of anomaly.
    pub ib_m_per_pa: f64,
    /// Wind gain, m per m/s of onshore wind.
    pub wind_m_per_ms: f64,
    /// Weights of the wind at lags 0, 1, 2, … hours.
    pub lag_weights: Vec<f64>,
    /// Autoregressive smoothing coefficient in [0, 1).
    pub ar: f64,
}

/// `count` normalized Gaussian weights centred on lag `peak` hours.
pub fn gaussian_lag_weights(count: usize, peak: f64, sigma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..count).map(|k| (-((k as f64 - peak).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

impl Default for ResponseCoefficients {
    fn default() -> Self {
        ResponseCoefficients {
            ib_m_per_pa: -1e-4,
            wind_m_per_ms: 0.02,
            lag_weights: gaussian_lag_weights(13, 5.0, 2.5),
            ar: 0.6,
        }
    }
}

/// Ranges the storm track parameters are drawn from, uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StormClimate {
    pub life_h: [f64; 2],
    pub speed_deg_per_h: [f64; 2],
    /// Direction of travel, degrees counter-clockwise from east.
    pub heading_deg: [f64; 2],
    pub radius_deg: [f64; 2],
}

impl Default for StormClimate {
    fn default() -> Self {
        StormClimate {
            life_h: [36.0, 60.0],
            speed_deg_per_h: [0.2, 0.45],
            heading_deg: [15.0, 75.0],
            radius_deg: [1.0, 2.0],
        }
    }
}

impl StormClimate {
    fn validate(&self) -> Result<()> {
        let ranges = [self.life_h, self.speed_deg_per_h, self.heading_deg, self.radius_deg];
        if ranges.iter().any(|r| !(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite()))
            || !(self.life_h[0] > 0.0 && self.radius_deg[0] > 0.0 && self.speed_deg_per_h[0] >= 0.0)
        {
            return Err(Error::InvalidConfig("storm ranges must be finite [lo, hi] with positive life and radius".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub dataset_name: String,
    pub grid: GridSpec,
    pub first_year: i32,
    pub past_years: u32,
    pub future_first_year: i32,
    pub future_years: u32,
    pub season_hours: u32,
    pub cadence_hours: u32,
    pub stations: Vec<StationSpec>,
    pub storm_rate_per_1000h: f64,
    pub storm_climate: StormClimate,
    /// Multiplies storm pressure deficits in future seasons.
    pub future_intensity_scale: f64,
    pub noise_m: f64,
    pub background_wind_ms: f64,
    pub background_pressure_pa: f64,
    /// Hours simulated before each season start to warm up the response.
    pub spinup_hours: u32,
    pub response: ResponseCoefficients,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dataset_name: "synthetic".into(),
            grid: GridSpec {
                ny: 8,
                nx: 8,
                lat0: 38.5,
                lon0: -75.5,
                dlat: 0.5,
                dlon: 0.5,
            },
            first_year: 1979,
            past_years: 6,
            future_first_year: 2070,
            future_years: 0,
            season_hours: 3600,
            cadence_hours: 6,
            stations: vec![
                StationSpec {
                    id: "battery".into(),
                    lat: 40.70,
                    lon: -74.01,
                    elevation_m: 3.0,
                    onshore_normal: [-0.5, 0.866_025_403_784_438_6],
                },
                StationSpec {
                    id: "montauk".into(),
                    lat: 41.05,
                    lon: -71.96,
                    elevation_m: 2.0,
                    onshore_normal: [0.0, 1.0],
                },
            ],
            storm_rate_per_1000h: 6.0,
            storm_climate: StormClimate::default(),
            future_intensity_scale: 1.1,
            noise_m: 0.005,
            background_wind_ms: 6.0,
            background_pressure_pa: 1500.0,
            spinup_hours: 48,
            response: ResponseCoefficients::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.ny == 0 || g.nx == 0 || !(g.dlat > 0.0) || !(g.dlon > 0.0) {
            return Err(Error::InvalidConfig("grid extents and spacing must be positive".into()));
        }
        if self.season_hours == 0 || self.season_hours % 6 != 0 {
            return Err(Error::InvalidConfig("season_hours must be a positive multiple of 6".into()));
        }
        if self.cadence_hours != 3 && self.cadence_hours != 6 {
            return Err(Error::UnsupportedCadence(self.cadence_hours));
        }
        if self.past_years + self.future_years == 0 {
            return Err(Error::InvalidConfig("at least one season is required".into()));
        }
        if self.stations.is_empty() {
            return Err(Error::InvalidConfig("at least one station is required".into()));
        }
        let mut ids: Vec<&str> = self.stations.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("station ids must be unique".into()));
        }
        if self.storm_rate_per_1000h < 0.0 || self.noise_m < 0.0 || self.background_wind_ms < 0.0 {
            return Err(Error::InvalidConfig("rates, noise and wind must be non-negative".into()));
        }
        self.storm_climate.validate()?;
        if !(0.0..1.0).contains(&self.response.ar) || self.response.lag_weights.is_empty() {
            return Err(Error::InvalidConfig("ar must lie in [0, 1) and lag weights be non-empty".into()));
        }
        let future_start = (self.future_first_year - self.first_year) as i64;
        if self.future_years > 0 && future_start < self.past_years as i64 {
            return Err(Error::InvalidConfig("future seasons overlap past seasons".into()));
        }
        Ok(())
    }

    pub fn season_years(&self) -> Vec<(i32, Period)> {
        let past = (0..self.past_years as i32).map(|k| (self.first_year + k, Period::Past));
        let future = (0..self.future_years as i32).map(|k| (self.future_first_year + k, Period::Future));
        past.chain(future).collect()
    }
}

/// Uniform background flow of one season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean_u: f64,
    pub mean_v: f64,
    pub amp_u: f64,
    pub amp_v: f64,
    pub period_u_h: f64,
    pub period_v_h: f64,
    pub phase_u: f64,
    pub phase_v: f64,
    pub pressure_amp_pa: f64,
    pub pressure_period_h: f64,
    pub pressure_phase: f64,
}

impl Background {
    pub fn wind(&self, t: f64) -> (f64, f64) {
        (
            self.mean_u + self.amp_u * (2.0 * PI * t / self.period_u_h + self.phase_u).sin(),
            self.mean_v + self.amp_v * (2.0 * PI * t / self.period_v_h + self.phase_v).sin(),
        )
    }
}

/// A low moving in a straight line with a half-sine intensity envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storm {
    pub start_hour: f64,
    pub life_h: f64,
    pub lat0: f64,
    pub lon0: f64,
    /// Degrees per hour.
    pub vlat: f64,
    pub vlon: f64,
    pub deficit_pa: f64,
    pub radius_deg: f64,
    pub max_wind_ms: f64,
}

impl Storm {
    fn envelope(&self, t: f64) -> f64 {
        let s = (t - self.start_hour) / self.life_h;
        if (0.0..=1.0).contains(&s) {
            (PI * s).sin()
        } else {
            0.0
        }
    }
}

/// Forcing of one season as a function of position and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticField {
    pub center_lat: f64,
    pub center_lon: f64,
    pub background: Background,
    pub storms: Vec<Storm>,
}

impl SyntheticField {
    /// `(u, v, p)` in m/s, m/s, Pa at absolute hour `t`.
    pub fn eval(&self, lat: f64, lon: f64, t: f64) -> (f64, f64, f64) {
        let bg = &self.background;
        let (ub, vb) = bg.wind(t);
        let coslat = self.center_lat.to_radians().cos();
        let dy_m = (lat - self.center_lat) * METERS_PER_DEGREE;
        let dx_m = (lon - self.center_lon) * METERS_PER_DEGREE * coslat;
        // Geostrophic balance of the uniform background wind.
        let mut p = REFERENCE_PRESSURE
            + bg.pressure_amp_pa * (2.0 * PI * t / bg.pressure_period_h + bg.pressure_phase).sin()
            - AIR_DENSITY * CORIOLIS * ub * dy_m
            + AIR_DENSITY * CORIOLIS * vb * dx_m;
        let (mut u, mut v) = (ub, vb);
        for s in &self.storms {
            let e = s.envelope(t);
            if e == 0.0 {
                continue;
            }
            let dt = t - s.start_hour;
            let dy = lat - (s.lat0 + s.vlat * dt);
            let dx = (lon - (s.lon0 + s.vlon * dt)) * coslat;
            let r2 = (dx * dx + dy * dy) / (s.radius_deg * s.radius_deg);
            p -= e * s.deficit_pa * (-0.5 * r2).exp();
            // Tangential speed V·(r/R)·exp((1 − r²/R²)/2), counter-clockwise.
            let speed_over_r = e * s.max_wind_ms * (0.5 * (1.0 - r2)).exp() / s.radius_deg;
            u += -dy * speed_over_r;
            v += dx * speed_over_r;
        }
        (u, v, p)
    }

    pub fn snapshot(&self, grid: &GridSpec, t: i64) -> ForcingSnapshot {
        let (lat, lon) = grid.node_coords();
        let n = lat.len();
        let (mut u, mut v, mut p) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (a, b, c) = self.eval(lat[i], lon[i], t as f64);
            u.push(a);
            v.push(b);
            p.push(c);
        }
        ForcingSnapshot {
            timestamp: t,
            ny: grid.ny,
            nx: grid.nx,
            lat,
            lon,
            u,
            v,
            p,
        }
    }

    /// Station pressure minus the grid-mean pressure at the same hour.
    pub fn station_anomaly(&self, grid: &GridSpec, lat: f64, lon: f64, t: f64) -> f64 {
        let (glat, glon) = grid.node_coords();
        let mean = glat
            .iter()
            .zip(&glon)
            .map(|(&a, &b)| self.eval(a, b, t).2)
            .sum::<f64>()
            / glat.len() as f64;
        self.eval(lat, lon, t).2 - mean
    }
}

/// Generator state recorded for one season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonForcing {
    pub year: i32,
    pub start_hour: i64,
    pub field: SyntheticField,
    pub noise_seeds: BTreeMap<String, u64>,
}

/// Coefficients needed to recompute every stored surge value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBlock {
    pub seed: u64,
    pub response: ResponseCoefficients,
    pub noise_m: f64,
    pub spinup_hours: u32,
    pub season_hours: u32,
    pub onshore_normals: BTreeMap<String, [f64; 2]>,
    pub seasons: Vec<SeasonForcing>,
}

/// Hourly surge at a station over `hours` hours from `start`.
pub fn station_response(
    field: &SyntheticField,
    grid: &GridSpec,
    station: &StationSpec,
    coeffs: &ResponseCoefficients,
    start: i64,
    hours: u32,
    spinup_hours: u32,
    noise_m: f64,
    noise_seed: u64,
) -> Vec<f64> {
    let lags = coeffs.lag_weights.len() as i64;
    let first = start - spinup_hours as i64;
    // Onshore wind from the earliest lag needed up to the last hour.
    let w0 = first - (lags - 1);
    let onshore: Vec<f64> = (w0..start + hours as i64)
        .map(|t| {
            let (u, v, _) = field.eval(station.lat, station.lon, t as f64);
            u * station.onshore_normal[0] + v * station.onshore_normal[1]
        })
        .collect();
    let mut state = 0.0;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut out = Vec::with_capacity(hours as usize);
    for t in first..start + hours as i64 {
        let anomaly = field.station_anomaly(grid, station.lat, station.lon, t as f64);
        let wind: f64 = coeffs
            .lag_weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * onshore[(t - k as i64 - w0) as usize])
            .sum();
        let drive = coeffs.ib_m_per_pa * anomaly + coeffs.wind_m_per_ms * wind;
        state = coeffs.ar * state + (1.0 - coeffs.ar) * drive;
        if t >= start {
            let eps: f64 = StandardNormal.sample(&mut noise_rng);
            out.push(state + noise_m * eps);
        }
    }
    out
}

fn sample_background(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Background {
    let w = cfg.background_wind_ms;
    let dir = rng.random_range(0.0..2.0 * PI);
    Background {
        mean_u: 0.5 * w * dir.cos(),
        mean_v: 0.5 * w * dir.sin(),
        amp_u: w * rng.random_range(0.5..1.0),
        amp_v: w * rng.random_range(0.5..1.0),
        period_u_h: rng.random_range(72.0..240.0),
        period_v_h: rng.random_range(72.0..240.0),
        phase_u: rng.random_range(0.0..2.0 * PI),
        phase_v: rng.random_range(0.0..2.0 * PI),
        pressure_amp_pa: cfg.background_pressure_pa,
        pressure_period_h: rng.random_range(120.0..480.0),
        pressure_phase: rng.random_range(0.0..2.0 * PI),
    }
}

fn sample_storms(rng: &mut ChaCha8Rng, cfg: &SynthConfig, start: i64, intensity: f64) -> Vec<Storm> {
    let mean = cfg.storm_rate_per_1000h * cfg.season_hours as f64 / 1000.0;
    if mean <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    let g = &cfg.grid;
    let lat_span = (g.ny - 1) as f64 * g.dlat;
    let lon_span = (g.nx - 1) as f64 * g.dlon;
    let c = &cfg.storm_climate;
    let mut storms: Vec<Storm> = (0..count)
        .map(|_| {
            let mid_t = start as f64 + rng.random_range(0.0..cfg.season_hours as f64);
            let life = draw(rng, c.life_h);
            let heading = draw(rng, c.heading_deg).to_radians();
            let speed = draw(rng, c.speed_deg_per_h);
            let (vlat, vlon) = (speed * heading.sin(), speed * heading.cos());
            let mid_lat = g.lat0 + rng.random_range(-0.25..1.25) * lat_span;
            let mid_lon = g.lon0 + rng.random_range(-0.25..1.25) * lon_span;
            // Pareto tail: heavy-tailed peak magnitudes.
            let u: f64 = rng.random_range(0.0..1.0);
            let deficit = (1000.0 * (1.0 - u).powf(-1.0 / 2.5)).min(8000.0) * intensity;
            let radius = draw(rng, c.radius_deg);
            Storm {
                start_hour: mid_t - 0.5 * life,
                life_h: life,
                lat0: mid_lat - vlat * 0.5 * life,
                lon0: mid_lon - vlon * 0.5 * life,
                vlat,
                vlon,
                deficit_pa: deficit,
                radius_deg: radius,
                max_wind_ms: 0.4 * deficit.sqrt(),
            }
        })
        .collect();
    storms.sort_by(|a, b| a.start_hour.total_cmp(&b.start_hour));
    storms
}

/// One generated season: forcing snapshots at the configured cadence and
/// hourly surge per station.
#[derive(Debug, Clone)]
pub struct SeasonData {
    pub year: i32,
    pub period: Period,
    pub start_hour: i64,
    pub snapshots: Vec<ForcingSnapshot>,
    pub surge: BTreeMap<String, super::sample::SurgeSeries>,
}

/// Generates every season described by `cfg`, deterministically in `seed`.
pub fn synthesize(cfg: &SynthConfig, seed: u64) -> Result<(SyntheticBlock, Vec<SeasonData>)> {
    cfg.validate()?;
    let (clat, clon) = cfg.grid.center();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = SyntheticBlock {
        seed,
        response: cfg.response.clone(),
        noise_m: cfg.noise_m,
        spinup_hours: cfg.spinup_hours,
        season_hours: cfg.season_hours,
        onshore_normals: cfg.stations.iter().map(|s| (s.id.clone(), s.onshore_normal)).collect(),
        seasons: Vec::new(),
    };
    let mut data = Vec::new();
    for (year, period) in cfg.season_years() {
        let start = (year - cfg.first_year) as i64 * HOURS_PER_YEAR;
        let intensity = if period == Period::Future { cfg.future_intensity_scale } else { 1.0 };
        let background = sample_background(&mut rng, cfg);
        let storms = sample_storms(&mut rng, cfg, start, intensity);
        let field = SyntheticField {
            center_lat: clat,
            center_lon: clon,
            background,
            storms,
        };
        let noise_seeds: BTreeMap<String, u64> = cfg.stations.iter().map(|s| (s.id.clone(), rng.random())).collect();

        let snapshots: Vec<ForcingSnapshot> = (0..cfg.season_hours as i64)
            .step_by(cfg.cadence_hours as usize)
            .map(|h| field.snapshot(&cfg.grid, start + h))
            .collect();
        let mut surge = BTreeMap::new();
        for st in &cfg.stations {
            let values = station_response(
                &field,
                &cfg.grid,
                st,
                &cfg.response,
                start,
                cfg.season_hours,
                cfg.spinup_hours,
                cfg.noise_m,
                noise_seeds[&st.id],
            );
            surge.insert(
                st.id.clone(),
                values.into_iter().enumerate().map(|(h, y)| (start + h as i64, y)).collect(),
            );
        }
        block.seasons.push(SeasonForcing {
            year,
            start_hour: start,
            field,
            noise_seeds,
        });
        data.push(SeasonData {
            year,
            period,
            start_hour: start,
            snapshots,
            surge,
        });
    }
    Ok((block, data))
}
