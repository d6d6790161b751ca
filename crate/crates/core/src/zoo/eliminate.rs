use serde::{Deserialize, Serialize};

use super::{PerformanceTable, ZooError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub solver_id: String,
    /// `A(s)` in percentage points at the moment of removal.
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooEliminationReport {
    pub removed: Vec<Removal>,
    pub final_zoo: Vec<String>,
    /// `A(s)` of every retained solver at termination.
    pub final_contributions: Vec<f64>,
    /// Percentage points.
    pub delta: f64,
}

/// `A(s) = meanGap(S ∖ s) − meanGap(S)` for each `s` in `active`, where the
/// mean gap of a set is the mean over rows of its best member's gap. Rows
/// unsolved by both sets contribute nothing.
pub fn removal_degradations(table: &PerformanceTable, active: &[usize]) -> Vec<f64> {
    let n = table.n_instances();
    let mut acc = vec![0.0; active.len()];
    for i in 0..n {
        let row = table.gap_row(i);
        // best and second best over the active set; only the unique holder of
        // the best value loses anything when removed
        let (mut b1, mut b2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
        for (k, &s) in active.iter().enumerate() {
            let g = row[s];
            if g < b1 {
                b2 = b1;
                b1 = g;
                arg = k;
            } else if g < b2 {
                b2 = g;
            }
        }
        if arg != usize::MAX && b2 > b1 {
            acc[arg] += b2 - b1;
        }
    }
    acc.iter().map(|a| a / n.max(1) as f64).collect()
}

/// Greedily drops the solver with the smallest `A(s)` (lowest index on ties)
/// while that minimum is ≤ `delta`, recomputing after each removal, until one
/// solver remains.
pub fn eliminate_zoo(table: &PerformanceTable, delta: f64) -> Result<ZooEliminationReport, ZooError> {
    if table.n_solvers() < 2 {
        return Err(ZooError::Domain("elimination needs at least 2 solvers".into()));
    }
    if !(delta >= 0.0) {
        return Err(ZooError::Domain(format!("delta must be >= 0, got {delta}")));
    }
    let mut active: Vec<usize> = (0..table.n_solvers()).collect();
    let mut removed = Vec::new();
    let mut a = removal_degradations(table, &active);
    while active.len() > 1 {
        let mut k = 0;
        for j in 1..a.len() {
            if a[j] < a[k] {
                k = j;
            }
        }
        if a[k] > delta {
            break;
        }
        log::info!("eliminating {} (A = {:.6} pp)", table.solver_ids()[active[k]], a[k]);
        removed.push(Removal {
            solver_id: table.solver_ids()[active[k]].clone(),
            contribution: a[k],
        });
        active.remove(k);
        a = removal_degradations(table, &active);
    }
    Ok(ZooEliminationReport {
        removed,
        final_zoo: active.iter().map(|&s| table.solver_ids()[s].clone()).collect(),
        final_contributions: a,
        delta,
    })
}
