use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Adjacency, Tensor};

/// Node feature width: `[lat, lon, u, v, p′]`.
pub const FEATURES: usize = 5;

/// Regular latitude/longitude lattice. Node `(r, c)` sits at
/// `(lat0 + r·dlat, lon0 + c·dlon)` and has row-major index `r·nx + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ny: usize,
    pub nx: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
}

impl GridSpec {
    pub fn node_count(&self) -> usize {
        self.ny * self.nx
    }

    pub fn node_coords(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lat = Vec::with_capacity(self.node_count());
        let mut lon = Vec::with_capacity(self.node_count());
        for r in 0..self.ny {
            for c in 0..self.nx {
                lat.push(self.lat0 + r as f64 * self.dlat);
                lon.push(self.lon0 + c as f64 * self.dlon);
            }
        }
        (lat, lon)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.lat0 + 0.5 * (self.ny - 1) as f64 * self.dlat,
            self.lon0 + 0.5 * (self.nx - 1) as f64 * self.dlon,
        )
    }
}

/// One time slice of gridded forcing in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSnapshot {
    /// Hours since the dataset epoch.
    pub timestamp: i64,
    pub ny: usize,
    pub nx: usize,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    /// m/s
    pub u: Vec<f64>,
    /// m/s
    pub v: Vec<f64>,
    /// Pa
    pub p: Vec<f64>,
}

impl ForcingSnapshot {
    pub fn validate(&self) -> Result<()> {
        let n = self.ny * self.nx;
        if n == 0 {
            return Err(Error::InvalidInput("snapshot grid has zero extent".into()));
        }
        for (name, f) in [("lat", &self.lat), ("lon", &self.lon), ("u", &self.u), ("v", &self.v), ("p", &self.p)] {
            if f.len() != n {
                return Err(Error::InvalidInput(format!(
                    "snapshot at {} h: field {name} has {} values for {n} nodes",
                    self.timestamp,
                    f.len()
                )));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("snapshot {} field {name}", self.timestamp)));
            }
        }
        Ok(())
    }
}

/// Directed 4-neighbor edge list of a grid plus its neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub ny: usize,
    pub nx: usize,
    pairs: Vec<(usize, usize)>,
    adjacency: Arc<Adjacency>,
}

impl EdgeList {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn adjacency(&self) -> &Arc<Adjacency> {
        &self.adjacency
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    /// Arbitrary edge list, e.g. a relabeled grid.
    pub fn from_pairs(node_count: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let adjacency = Arc::new(Adjacency::from_edges(node_count, &pairs)?);
        Ok(EdgeList {
            ny: node_count,
            nx: 1,
            pairs,
            adjacency,
        })
    }
}

/// Builds the 4-neighbor grid graph on a row-major `ny × nx` lattice. Every
/// undirected edge is stored in both directions.
pub fn build_grid_graph(ny: usize, nx: usize) -> Result<EdgeList> {
    if ny == 0 || nx == 0 {
        return Err(Error::InvalidInput(format!("grid extents must be ≥ 1, got {ny}×{nx}")));
    }
    let mut pairs = Vec::with_capacity(2 * (ny * (nx - 1) + nx * (ny - 1)));
    for r in 0..ny {
        for c in 0..nx {
            let i = r * nx + c;
            if c + 1 < nx {
                pairs.push((i, i + 1));
                pairs.push((i + 1, i));
            }
            if r + 1 < ny {
                pairs.push((i, i + nx));
                pairs.push((i + nx, i));
            }
        }
    }
    let adjacency = Arc::new(Adjacency::from_edges(ny * nx, &pairs)?);
    Ok(EdgeList { ny, nx, pairs, adjacency })
}

/// Subtracts the instantaneous spatial mean.
pub fn center_pressure(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidInput("cannot center an empty pressure field".into()));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pressure field".into()));
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    Ok(p.iter().map(|x| x - mean).collect())
}

/// Forcing snapshot as graph: shared edges plus an `N × 5` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingGraph {
    pub timestamp: i64,
    pub edges: Arc<EdgeList>,
    pub features: Tensor,
}

impl ForcingGraph {
    pub fn from_snapshot(snap: &ForcingSnapshot, edges: Arc<EdgeList>, center: bool) -> Result<Self> {
        snap.validate()?;
        let n = snap.ny * snap.nx;
        if edges.node_count() != n {
            return Err(Error::InvalidInput(format!(
                "snapshot has {n} nodes, edge list {}",
                edges.node_count()
            )));
        }
        let p = if center { center_pressure(&snap.p)? } else { snap.p.clone() };
        let mut x = Vec::with_capacity(n * FEATURES);
        for i in 0..n {
            x.extend_from_slice(&[snap.lat[i], snap.lon[i], snap.u[i], snap.v[i], p[i]]);
        }
        Ok(ForcingGraph {
            timestamp: snap.timestamp,
            edges,
            features: Tensor::from_rows(n, FEATURES, x)?,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}
