use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Triangular};
use serde::{Deserialize, Serialize};

use super::{InstanceError, Metric, ProblemKind, Provenance, RawNodes, RoutingInstance, SampledParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMode {
    /// `Q = 30 + ⌈N/5⌉`.
    ScaleRelated,
    /// `Q ~ T(lb, m, ub)` with `ub ~ U(20, N/2)`, `m ~ U(5, ub)`, `lb ~ U(3, m)`.
    Triangular,
    /// Either of the above with probability ½.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: ProblemKind,
    pub n_range: [usize; 2],
    #[serde(default = "default_components")]
    pub max_components: usize,
    #[serde(default = "default_capacity_mode")]
    pub capacity_mode: CapacityMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_components() -> usize {
    15
}

fn default_capacity_mode() -> CapacityMode {
    CapacityMode::Mixed
}

impl GeneratorConfig {
    pub fn new(kind: ProblemKind, n_min: usize, n_max: usize, seed: u64) -> Self {
        Self {
            kind,
            n_range: [n_min, n_max],
            max_components: default_components(),
            capacity_mode: default_capacity_mode(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let [lo, hi] = self.n_range;
        if lo < 2 || lo > hi {
            return Err(InstanceError::Config(format!(
                "n_range must satisfy 2 <= n_min <= n_max, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Independent stream `index` under `root`; the same pair always yields the
/// same generator regardless of evaluation order.
pub fn instance_rng(root: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng
}

fn min_max_scale(points: &mut [[f64; 2]]) {
    for axis in 0..2 {
        let lo = points.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for p in points.iter_mut() {
            p[axis] = if range > 0.0 {
                ((p[axis] - lo) / range).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    }
}

fn sample_coords<R: Rng>(n: usize, components: usize, rng: &mut R) -> Vec<[f64; 2]> {
    if components == 0 {
        return (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    }
    // (mean, Cholesky factor of Σ)
    let comps: Vec<([f64; 2], [f64; 3])> = (0..components)
        .map(|_| {
            let mu = [rng.gen::<f64>(), rng.gen::<f64>()];
            let vx: f64 = rng.gen_range(1.0..=100.0);
            let vy: f64 = rng.gen_range(1.0..=100.0);
            let bound = (vx * vy).sqrt();
            let cov: f64 = rng.gen_range(-bound..bound);
            let l11 = vx.sqrt();
            let l21 = cov / l11;
            let l22 = (vy - l21 * l21).max(0.0).sqrt();
            (mu, [l11, l21, l22])
        })
        .collect();
    let mut pts: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let (mu, l) = comps[rng.gen_range(0..components)];
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            [mu[0] + l[0] * z1, mu[1] + l[1] * z1 + l[2] * z2]
        })
        .collect();
    min_max_scale(&mut pts);
    pts
}

fn sample_capacity<R: Rng>(n: usize, mode: CapacityMode, rng: &mut R) -> (CapacityMode, f64) {
    let mode = match mode {
        CapacityMode::Mixed => {
            if rng.gen_bool(0.5) {
                CapacityMode::ScaleRelated
            } else {
                CapacityMode::Triangular
            }
        }
        m => m,
    };
    let q = match mode {
        CapacityMode::ScaleRelated => 30.0 + (n as f64 / 5.0).ceil(),
        _ => {
            let ub = if n as f64 / 2.0 > 20.0 {
                rng.gen_range(20.0..n as f64 / 2.0)
            } else {
                20.0
            };
            let m = rng.gen_range(5.0..ub);
            let lb = rng.gen_range(3.0..m);
            let tri = Triangular::new(lb, ub, m).expect("lb < m < ub");
            let q: f64 = tri.sample(rng);
            q.round().max(3.0)
        }
    };
    (mode, q)
}

/// Draws one instance; `index` names the stream it came from.
pub fn generate_instance<R: Rng>(
    cfg: &GeneratorConfig,
    index: u64,
    rng: &mut R,
) -> Result<RoutingInstance, InstanceError> {
    cfg.validate()?;
    let n = rng.gen_range(cfg.n_range[0]..=cfg.n_range[1]);
    let components = rng.gen_range(0..=cfg.max_components);
    let coords = sample_coords(n, components, rng);

    let (capacity_mode, capacity, raw_demands) = match cfg.kind {
        ProblemKind::Tsp => (None, None, Vec::new()),
        ProblemKind::Cvrp => {
            let (mode, q) = sample_capacity(n, cfg.capacity_mode, rng);
            let mut d = vec![0.0];
            d.extend((1..n).map(|_| f64::from(rng.gen_range(1u32..=10)).min(q)));
            (Some(mode), Some(q), d)
        }
    };
    let demands = raw_demands.iter().map(|d| d / capacity.unwrap_or(1.0)).collect();
    let inst = RoutingInstance {
        id: format!("{}-{:06}", cfg.kind.as_str(), index),
        kind: cfg.kind,
        raw: RawNodes {
            coords: coords.clone(),
            demands: raw_demands,
            capacity: capacity.unwrap_or(0.0),
            offset: [0.0, 0.0],
            scale: 1.0,
        },
        coords,
        demands,
        capacity: 1.0,
        metric: Metric::Euclidean,
        provenance: Provenance::Synthetic {
            seed: cfg.seed,
            index,
            params: SampledParams {
                components,
                capacity_mode,
                capacity,
            },
        },
    };
    inst.check()?;
    Ok(inst)
}

/// Generates instances `first..first + count` of the stream rooted at `cfg.seed`.
pub fn generate_dataset(
    cfg: &GeneratorConfig,
    first: u64,
    count: usize,
) -> Result<Vec<RoutingInstance>, InstanceError> {
    cfg.validate()?;
    (first..first + count as u64)
        .map(|i| generate_instance(cfg, i, &mut instance_rng(cfg.seed, i)))
        .collect()
}
