use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, validate_zoo, SolverHandle, ZooError};
use crate::instance::RoutingInstance;

/// One `(instance, solver)` cell as persisted in JSON lines. `objective` is
/// `null` for failed cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRecord {
    pub instance_id: String,
    pub solver_id: String,
    pub objective: Option<f64>,
    pub time_ms: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub instance_id: String,
    pub solver_id: String,
    pub reason: String,
}

/// Objective and wall-time matrices, one row per instance. Failed cells hold
/// `+∞` and are listed in `failures`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceTable {
    instance_ids: Vec<String>,
    solver_ids: Vec<String>,
    objective: Vec<f64>,
    time_ms: Vec<f64>,
    reference: Vec<f64>,
    gap: Vec<f64>,
    pub failures: Vec<CellFailure>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for one cell, derived from the ids alone so that results do not
/// depend on submission order or thread count.
pub fn cell_seed(root: u64, instance_id: &str, solver_id: &str) -> u64 {
    let mut key = Vec::with_capacity(instance_id.len() + solver_id.len() + 9);
    key.extend_from_slice(&root.to_le_bytes());
    key.extend_from_slice(instance_id.as_bytes());
    key.push(0);
    key.extend_from_slice(solver_id.as_bytes());
    fnv1a(&key)
}

impl PerformanceTable {
    /// Assembles a table from row-major objective and time matrices. The
    /// reference defaults to the finite row minimum; a best-known cost lowers
    /// it further but never raises it.
    pub fn from_matrices(
        instance_ids: Vec<String>,
        solver_ids: Vec<String>,
        objective: Vec<f64>,
        time_ms: Vec<f64>,
        best_known: Option<&BTreeMap<String, f64>>,
    ) -> Result<Self, ZooError> {
        let (n, m) = (instance_ids.len(), solver_ids.len());
        if objective.len() != n * m || time_ms.len() != n * m {
            return Err(ZooError::Domain(format!(
                "matrix sizes {} / {} do not match {n} x {m}",
                objective.len(),
                time_ms.len()
            )));
        }
        if objective.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(ZooError::Domain("objectives must be nonnegative numbers".into()));
        }
        let mut reference = Vec::with_capacity(n);
        for (i, id) in instance_ids.iter().enumerate() {
            let row_min = objective[i * m..(i + 1) * m].iter().copied().fold(f64::INFINITY, f64::min);
            let r = match best_known.and_then(|b| b.get(id)) {
                Some(&bk) => bk.min(row_min),
                None => row_min,
            };
            reference.push(r);
        }
        let gap = (0..n * m)
            .map(|k| {
                let (o, r) = (objective[k], reference[k / m]);
                if !o.is_finite() || !r.is_finite() {
                    f64::INFINITY
                } else if r > 0.0 {
                    100.0 * (o - r) / r
                } else if o <= r {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok(Self {
            instance_ids,
            solver_ids,
            objective,
            time_ms,
            reference,
            gap,
            failures: Vec::new(),
        })
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn n_solvers(&self) -> usize {
        self.solver_ids.len()
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn solver_ids(&self) -> &[String] {
        &self.solver_ids
    }

    pub fn solver_index(&self, id: &str) -> Option<usize> {
        self.solver_ids.iter().position(|s| s == id)
    }

    pub fn objective(&self, i: usize, s: usize) -> f64 {
        self.objective[i * self.n_solvers() + s]
    }

    pub fn time_ms(&self, i: usize, s: usize) -> f64 {
        self.time_ms[i * self.n_solvers() + s]
    }

    pub fn reference(&self, i: usize) -> f64 {
        self.reference[i]
    }

    pub fn failed(&self, i: usize, s: usize) -> bool {
        !self.objective(i, s).is_finite()
    }

    /// Gap in percent against the row reference.
    pub fn gap(&self, i: usize, s: usize) -> f64 {
        self.gap[i * self.n_solvers() + s]
    }

    pub fn gap_row(&self, i: usize) -> &[f64] {
        let m = self.n_solvers();
        &self.gap[i * m..(i + 1) * m]
    }

    /// Mean over rows of the best gap among `subset` (the subset's oracle).
    pub fn subset_mean_gap(&self, subset: &[usize]) -> f64 {
        if self.n_instances() == 0 || subset.is_empty() {
            return f64::INFINITY;
        }
        let total: f64 = (0..self.n_instances())
            .map(|i| subset.iter().map(|&s| self.gap(i, s)).fold(f64::INFINITY, f64::min))
            .sum();
        total / self.n_instances() as f64
    }

    pub fn solver_mean_gap(&self, s: usize) -> f64 {
        self.subset_mean_gap(&[s])
    }

    pub fn oracle_mean_gap(&self) -> f64 {
        let all: Vec<usize> = (0..self.n_solvers()).collect();
        self.subset_mean_gap(&all)
    }

    /// Rows restricted to `rows` (in the given order), references kept.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let m = self.n_solvers();
        let pick = |v: &[f64]| rows.iter().flat_map(|&i| v[i * m..(i + 1) * m].iter().copied()).collect();
        let ids: Vec<String> = rows.iter().map(|&i| self.instance_ids[i].clone()).collect();
        Self {
            failures: self
                .failures
                .iter()
                .filter(|f| ids.contains(&f.instance_id))
                .cloned()
                .collect(),
            instance_ids: ids,
            solver_ids: self.solver_ids.clone(),
            objective: pick(&self.objective),
            time_ms: pick(&self.time_ms),
            reference: rows.iter().map(|&i| self.reference[i]).collect(),
            gap: pick(&self.gap),
        }
    }

    /// Columns restricted to `cols`, references kept (gaps stay relative to
    /// the full zoo's reference).
    pub fn select_solvers(&self, cols: &[usize]) -> Self {
        let m = self.n_solvers();
        let pick = |v: &[f64]| {
            (0..self.n_instances())
                .flat_map(|i| cols.iter().map(move |&s| v[i * m + s]))
                .collect()
        };
        let ids: Vec<String> = cols.iter().map(|&s| self.solver_ids[s].clone()).collect();
        Self {
            failures: self
                .failures
                .iter()
                .filter(|f| ids.contains(&f.solver_id))
                .cloned()
                .collect(),
            instance_ids: self.instance_ids.clone(),
            solver_ids: ids,
            objective: pick(&self.objective),
            time_ms: pick(&self.time_ms),
            reference: self.reference.clone(),
            gap: pick(&self.gap),
        }
    }

    /// Rows keyed by instance id, for joining with datasets.
    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.instance_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    pub fn records(&self) -> Vec<CellRecord> {
        let mut out = Vec::with_capacity(self.objective.len());
        for (i, iid) in self.instance_ids.iter().enumerate() {
            for (s, sid) in self.solver_ids.iter().enumerate() {
                let o = self.objective(i, s);
                out.push(CellRecord {
                    instance_id: iid.clone(),
                    solver_id: sid.clone(),
                    objective: o.is_finite().then_some(o),
                    time_ms: self.time_ms(i, s),
                    failed: !o.is_finite(),
                });
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ZooError> {
        let io = |source| ZooError::Io {
            path: path.display().to_string(),
            source,
        };
        let f = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Parses JSON-lines records. Instance and solver order follow first
    /// appearance; every pair must occur exactly once.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ZooError> {
        let mut inst_ix: HashMap<String, usize> = HashMap::new();
        let mut solv_ix: HashMap<String, usize> = HashMap::new();
        let mut instance_ids = Vec::new();
        let mut solver_ids = Vec::new();
        let mut cells: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
        for (k, line) in r.lines().enumerate() {
            let lineno = k + 1;
            let line = line.map_err(|e| ZooError::TableFormat {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CellRecord = serde_json::from_str(&line).map_err(|e| ZooError::TableFormat {
                line: lineno,
                message: e.to_string(),
            })?;
            let objective = match (rec.failed, rec.objective) {
                (true, _) => f64::INFINITY,
                (false, Some(o)) if o.is_finite() && o >= 0.0 => o,
                (false, _) => {
                    return Err(ZooError::TableFormat {
                        line: lineno,
                        message: "non-failed cell needs a finite nonnegative objective".into(),
                    })
                }
            };
            let i = *inst_ix.entry(rec.instance_id.clone()).or_insert_with(|| {
                instance_ids.push(rec.instance_id.clone());
                instance_ids.len() - 1
            });
            let s = *solv_ix.entry(rec.solver_id.clone()).or_insert_with(|| {
                solver_ids.push(rec.solver_id.clone());
                solver_ids.len() - 1
            });
            if cells.insert((i, s), (objective, rec.time_ms)).is_some() {
                return Err(ZooError::TableFormat {
                    line: lineno,
                    message: format!("duplicate cell ({}, {})", rec.instance_id, rec.solver_id),
                });
            }
        }
        let (n, m) = (instance_ids.len(), solver_ids.len());
        if n == 0 {
            return Err(ZooError::TableFormat {
                line: 0,
                message: "no records".into(),
            });
        }
        let mut objective = Vec::with_capacity(n * m);
        let mut time_ms = Vec::with_capacity(n * m);
        let mut failures = Vec::new();
        for i in 0..n {
            for s in 0..m {
                let (o, t) = *cells.get(&(i, s)).ok_or_else(|| ZooError::TableFormat {
                    line: 0,
                    message: format!("missing cell ({}, {})", instance_ids[i], solver_ids[s]),
                })?;
                if !o.is_finite() {
                    failures.push(CellFailure {
                        instance_id: instance_ids[i].clone(),
                        solver_id: solver_ids[s].clone(),
                        reason: "recorded as failed".into(),
                    });
                }
                objective.push(o);
                time_ms.push(t);
            }
        }
        let mut t = Self::from_matrices(instance_ids, solver_ids, objective, time_ms, None)?;
        t.failures = failures;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, ZooError> {
        let f = std::fs::File::open(path).map_err(|source| ZooError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Runs every solver on every instance with at most `jobs` cells in flight.
/// Cell `(i, s)` is seeded by [`cell_seed`], so the table is identical for any
/// `jobs` and any instance order (up to row order).
pub fn build_performance_table(
    zoo: &[SolverHandle],
    dataset: &[RoutingInstance],
    jobs: usize,
    seed: u64,
    best_known: Option<&BTreeMap<String, f64>>,
) -> Result<PerformanceTable, ZooError> {
    validate_zoo(zoo)?;
    if dataset.is_empty() {
        return Err(ZooError::Domain("empty dataset".into()));
    }
    for inst in dataset {
        if let Some(h) = zoo.iter().find(|h| !h.support().accepts(inst.kind)) {
            return Err(ZooError::Config(format!(
                "solver `{}` cannot solve {} instance `{}`",
                h.id,
                inst.kind.as_str(),
                inst.id
            )));
        }
    }
    let m = zoo.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ZooError::Config(format!("thread pool: {e}")))?;
    let cells: Vec<(f64, f64, Option<String>)> = pool.install(|| {
        (0..dataset.len() * m)
            .into_par_iter()
            .map(|k| {
                let (inst, h) = (&dataset[k / m], &zoo[k % m]);
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, &inst.id, &h.id));
                match solve(h, inst, &mut rng) {
                    Ok(sol) => (sol.objective, sol.wall_time * 1e3, None),
                    Err(e) => {
                        log::warn!("solver {} failed on {}: {e}", h.id, inst.id);
                        (f64::INFINITY, 0.0, Some(e.to_string()))
                    }
                }
            })
            .collect()
    });
    let mut failures = Vec::new();
    for (k, c) in cells.iter().enumerate() {
        if let Some(reason) = &c.2 {
            failures.push(CellFailure {
                instance_id: dataset[k / m].id.clone(),
                solver_id: zoo[k % m].id.clone(),
                reason: reason.clone(),
            });
        }
    }
    let mut table = PerformanceTable::from_matrices(
        dataset.iter().map(|d| d.id.clone()).collect(),
        zoo.iter().map(|h| h.id.clone()).collect(),
        cells.iter().map(|c| c.0).collect(),
        cells.iter().map(|c| c.1).collect(),
        best_known,
    )?;
    table.failures = failures;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooStatistics {
    pub solver_ids: Vec<String>,
    /// Percent.
    pub mean_gap: Vec<f64>,
    pub oracle_gap: f64,
    pub single_best: usize,
    /// Rows where the solver attains the row minimum; ties credit everyone tied.
    pub wins: Vec<usize>,
}

impl ZooStatistics {
    pub fn win_share(&self, s: usize, rows: usize) -> f64 {
        self.wins[s] as f64 / rows as f64
    }
}

/// Tolerance for treating two objectives as tied.
fn tied(a: f64, best: f64) -> bool {
    a <= best + 1e-12 * best.abs().max(1.0)
}

pub fn zoo_statistics(table: &PerformanceTable) -> Result<ZooStatistics, ZooError> {
    let (n, m) = (table.n_instances(), table.n_solvers());
    if n == 0 || m == 0 {
        return Err(ZooError::Domain("empty performance table".into()));
    }
    let mean_gap: Vec<f64> = (0..m).map(|s| table.solver_mean_gap(s)).collect();
    let mut single_best = 0;
    for s in 1..m {
        if mean_gap[s] < mean_gap[single_best] {
            single_best = s;
        }
    }
    let mut wins = vec![0; m];
    for i in 0..n {
        let best = (0..m).map(|s| table.objective(i, s)).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            continue;
        }
        for (s, w) in wins.iter_mut().enumerate() {
            if tied(table.objective(i, s), best) {
                *w += 1;
            }
        }
    }
    Ok(ZooStatistics {
        solver_ids: table.solver_ids().to_vec(),
        mean_gap,
        oracle_gap: table.oracle_mean_gap(),
        single_best,
        wins,
    })
}
