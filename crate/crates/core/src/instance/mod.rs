//! Routing instances, synthetic generation, augmentation, TSPLIB/CVRPLIB I/O
//! and solution costing.

mod augment;
mod cost;
mod dataset;
mod generate;
mod tsplib;

pub use augment::{augment_8fold, Symmetry, SYMMETRIES};
pub use cost::{mean_gap, optimality_gap, tour_cost, validate_plan, RoutePlan, Solution, ValidationError};
pub use dataset::{load_dataset, save_dataset, DatasetEntry, DatasetManifest};
pub use generate::{generate_dataset, generate_instance, instance_rng, CapacityMode, GeneratorConfig};
pub use tsplib::{parse_instance_file, serialize_instance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
}

impl ProblemKind {
    /// Raw per-node feature width fed to the encoders.
    pub fn feature_width(self) -> usize {
        match self {
            ProblemKind::Tsp => 2,
            ProblemKind::Cvrp => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Tsp => "tsp",
            ProblemKind::Cvrp => "cvrp",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(ProblemKind::Tsp),
            "cvrp" => Ok(ProblemKind::Cvrp),
            other => Err(InstanceError::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

/// How edge lengths are measured when costing a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Exact Euclidean distance between the stored coordinates.
    Euclidean,
    /// TSPLIB `EUC_2D`: Euclidean distance on the raw coordinates rounded to
    /// the nearest integer.
    TsplibRounded,
}

/// Parameters actually drawn while generating a synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledParams {
    pub components: usize,
    pub capacity_mode: Option<CapacityMode>,
    pub capacity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64, index: u64, params: SampledParams },
    File { path: String },
}

/// Unnormalized node data kept for exact costing and serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawNodes {
    pub coords: Vec<[f64; 2]>,
    /// Integer-valued demands as written in the file (empty for TSP).
    pub demands: Vec<f64>,
    pub capacity: f64,
    /// `raw = offset + normalized · scale`.
    pub offset: [f64; 2],
    pub scale: f64,
}

/// One TSP or CVRP instance. For CVRP node 0 is the depot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingInstance {
    pub id: String,
    pub kind: ProblemKind,
    /// Coordinates normalized into the unit square.
    pub coords: Vec<[f64; 2]>,
    /// Demands divided by capacity (CVRP only; empty for TSP).
    pub demands: Vec<f64>,
    /// Normalized capacity, always 1.
    pub capacity: f64,
    pub metric: Metric,
    pub raw: RawNodes,
    pub provenance: Provenance,
}

impl RoutingInstance {
    /// Builds a synthetic-style instance directly from unit-square
    /// coordinates (and integer demands plus capacity for CVRP).
    pub fn from_unit_coords(
        id: impl Into<String>,
        kind: ProblemKind,
        coords: Vec<[f64; 2]>,
        raw_demands: Vec<f64>,
        raw_capacity: f64,
    ) -> Result<Self, InstanceError> {
        let demands = match kind {
            ProblemKind::Tsp => Vec::new(),
            ProblemKind::Cvrp => raw_demands.iter().map(|d| d / raw_capacity).collect(),
        };
        let inst = Self {
            id: id.into(),
            kind,
            raw: RawNodes {
                coords: coords.clone(),
                demands: if kind == ProblemKind::Cvrp { raw_demands } else { Vec::new() },
                capacity: if kind == ProblemKind::Cvrp { raw_capacity } else { 0.0 },
                offset: [0.0, 0.0],
                scale: 1.0,
            },
            coords,
            demands,
            capacity: 1.0,
            metric: Metric::Euclidean,
            provenance: Provenance::File {
                path: String::new(),
            },
        };
        inst.check()?;
        Ok(inst)
    }

    /// Number of nodes N (including the depot for CVRP).
    pub fn scale(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean distance between normalized coordinates.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Edge length under the instance's costing metric.
    pub fn cost_dist(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            Metric::Euclidean => self.dist(i, j),
            Metric::TsplibRounded => {
                let (a, b) = (self.raw.coords[i], self.raw.coords[j]);
                ((a[0] - b[0]).hypot(a[1] - b[1]) + 0.5).floor()
            }
        }
    }

    /// Full `N × N` matrix of normalized distances.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.scale();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.dist(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    /// Per-node raw features `(x, y)` or `(x, y, demand)`, row-major.
    pub fn node_features(&self) -> Vec<f64> {
        let w = self.kind.feature_width();
        let mut out = Vec::with_capacity(self.scale() * w);
        for (i, c) in self.coords.iter().enumerate() {
            out.extend_from_slice(c);
            if self.kind == ProblemKind::Cvrp {
                out.push(self.demands[i]);
            }
        }
        out
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<(), InstanceError> {
        let n = self.scale();
        if n < 2 {
            return Err(InstanceError::Domain(format!("{}: needs at least 2 nodes, has {n}", self.id)));
        }
        if self.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(InstanceError::Domain(format!("{}: non-finite coordinate", self.id)));
        }
        if self.kind == ProblemKind::Cvrp {
            if self.demands.len() != n {
                return Err(InstanceError::Domain(format!(
                    "{}: {} demands for {n} nodes",
                    self.id,
                    self.demands.len()
                )));
            }
            if self.demands[0] != 0.0 {
                return Err(InstanceError::Domain(format!("{}: depot demand must be 0", self.id)));
            }
            if self.demands.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(InstanceError::Domain(format!(
                    "{}: normalized demand outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
}
