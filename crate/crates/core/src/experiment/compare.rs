//! Strategy evaluation on recorded runs, parameter sweeps and the
//! fixed-portfolio baseline.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instance::RoutingInstance;
use crate::model::Trainable;
use crate::strategy::{decide_all, execute_recorded, SelectionDecision, Strategy};
use crate::zoo::PerformanceTable;

use super::config::Timing;
use super::report::ReportRow;
use super::ExperimentError;

/// Largest number of subsets [`portfolio_baseline`] will enumerate.
pub const PORTFOLIO_CAP: u128 = 1_000_000;

/// Model scores for a set of table rows, with per-instance scoring time.
#[derive(Clone, Debug)]
pub struct ScoredRows {
    pub ids: Vec<String>,
    pub rows: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
    pub select_ms: Vec<f64>,
}

/// Scores `insts` one by one (in parallel), timing each.
pub fn score_rows<T: Trainable + Sync>(model: &T, table: &PerformanceTable, insts: &[RoutingInstance]) -> Result<ScoredRows, ExperimentError> {
    let index = table.row_index();
    let rows = insts
        .iter()
        .map(|i| index.get(i.id.as_str()).copied().ok_or_else(|| ExperimentError::Contract(format!("`{}` missing from the table", i.id))))
        .collect::<Result<Vec<_>, _>>()?;
    let timed = insts
        .par_iter()
        .map(|i| {
            let t = Instant::now();
            let s = model.score_all(std::slice::from_ref(i))?.remove(0);
            Ok((s, t.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<Vec<_>, crate::model::ModelError>>()?;
    let (scores, select_ms) = timed.into_iter().unzip();
    Ok(ScoredRows { ids: insts.iter().map(|i| i.id.clone()).collect(), rows, scores, select_ms })
}

fn row_best(table: &PerformanceTable, row: usize) -> f64 {
    (0..table.n_solvers()).map(|s| table.objective(row, s)).fold(f64::INFINITY, f64::min)
}

/// Whether `chosen` contains a solver attaining the row minimum.
pub fn hits_best(table: &PerformanceTable, row: usize, chosen: &[usize]) -> bool {
    let best = row_best(table, row);
    chosen.iter().any(|&s| table.objective(row, s) == best)
}

fn timing_value(timing: Timing, total_ms: f64, n: usize) -> Option<f64> {
    match timing {
        Timing::Wall => Some(total_ms / n as f64 / 1e3),
        Timing::Omit => None,
    }
}

/// Report row for fixed per-row choices (`choices[i]` for `rows[i]`).
pub fn choice_row(
    method: impl Into<String>,
    table: &PerformanceTable,
    rows: &[usize],
    choices: &[Vec<usize>],
    extra_ms: &[f64],
    timing: Timing,
) -> ReportRow {
    let mut gap = 0.0;
    let mut ms = 0.0;
    let mut hits = 0usize;
    for (i, (&r, c)) in rows.iter().zip(choices).enumerate() {
        let out = execute_recorded(table, r, c, extra_ms.get(i).copied().unwrap_or(0.0));
        gap += out.gap;
        ms += out.time_ms;
        hits += hits_best(table, r, c) as usize;
    }
    let n = rows.len();
    ReportRow {
        method: method.into(),
        gap_mean: gap / n as f64,
        gap_std: 0.0,
        time_s: timing_value(timing, ms, n),
        accuracy: Some(100.0 * hits as f64 / n as f64),
    }
}

/// Per-solver rows (table order), the single-best solver picked on
/// `pick_rows`, and the oracle, all evaluated on `rows`.
pub fn baseline_rows(table: &PerformanceTable, rows: &[usize], pick_rows: &[usize], timing: Timing) -> Vec<ReportRow> {
    let m = table.n_solvers();
    let mut out: Vec<ReportRow> = (0..m)
        .map(|s| choice_row(table.solver_ids()[s].clone(), table, rows, &vec![vec![s]; rows.len()], &[], timing))
        .collect();
    let single = single_best(table, pick_rows);
    let mut sb = choice_row("single-best", table, rows, &vec![vec![single]; rows.len()], &[], timing);
    sb.method = format!("single-best:{}", table.solver_ids()[single]);
    out.push(sb);
    let oracle: Vec<Vec<usize>> = rows
        .iter()
        .map(|&r| {
            let best = row_best(table, r);
            vec![(0..m).find(|&s| table.objective(r, s) == best).unwrap_or(0)]
        })
        .collect();
    out.push(choice_row("oracle", table, rows, &oracle, &[], timing));
    out
}

/// Column with the lowest mean gap over `rows`; lowest index on ties.
pub fn single_best(table: &PerformanceTable, rows: &[usize]) -> usize {
    let mean = |s: usize| rows.iter().map(|&r| table.gap(r, s)).sum::<f64>() / rows.len() as f64;
    (0..table.n_solvers()).fold(0, |best, s| if mean(s) < mean(best) { s } else { best })
}

/// Decisions and report row for one strategy. Rejection thresholds are
/// calibrated on these rows' confidences.
pub fn evaluate_strategy(
    strategy: &Strategy,
    table: &PerformanceTable,
    scored: &ScoredRows,
    timing: Timing,
) -> Result<(ReportRow, Vec<SelectionDecision>), ExperimentError> {
    let decisions = decide_all(strategy, &scored.ids, &scored.scores, None)?;
    let choices: Vec<Vec<usize>> = decisions.iter().map(|d| d.chosen.clone()).collect();
    let row = choice_row(strategy.to_string(), table, &scored.rows, &choices, &scored.select_ms, timing);
    Ok((row, decisions))
}

/// One point of a rejection-ratio or top-p sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strategy: String,
    pub gap_mean: f64,
    pub time_s: Option<f64>,
    pub mean_selected: f64,
}

/// Rejection ratios 0.05..=0.85 (step 0.05) for k in {2, 3, 4}, then
/// p in 0.40..=0.95 (step 0.01). `k` values above `m` are skipped.
pub fn sweep_grid(m: usize) -> Vec<Strategy> {
    let mut out = Vec::new();
    for k in [2, 3, 4].into_iter().filter(|&k| k <= m) {
        for i in 1..=17u32 {
            out.push(Strategy::Reject { ratio: f64::from(i * 5) / 100.0, k });
        }
    }
    for i in 40..=95u32 {
        out.push(Strategy::TopP(f64::from(i) / 100.0));
    }
    out
}

pub fn run_sweep(table: &PerformanceTable, scored: &ScoredRows, timing: Timing) -> Result<Vec<SweepPoint>, ExperimentError> {
    sweep_grid(table.n_solvers())
        .iter()
        .map(|s| {
            let (row, decisions) = evaluate_strategy(s, table, scored, timing)?;
            let sel = decisions.iter().map(|d| d.chosen.len()).sum::<usize>() as f64 / decisions.len() as f64;
            Ok(SweepPoint { strategy: row.method, gap_mean: row.gap_mean, time_s: row.time_s, mean_selected: sel })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(w: W, points: &[SweepPoint]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(w);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| ExperimentError::Contract(e.to_string()))
}

/// Result of [`compare_strategies`].
#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<ReportRow>,
    pub decisions: Vec<SelectionDecision>,
    pub sweep: Vec<SweepPoint>,
}

/// Scores the instances with `model` and evaluates every strategy on the
/// recorded runs, plus the sweep grids when `sweeps` is set.
pub fn compare_strategies<T: Trainable + Sync>(
    model: &T,
    table: &PerformanceTable,
    insts: &[RoutingInstance],
    strategies: &[Strategy],
    timing: Timing,
    sweeps: bool,
) -> Result<Comparison, ExperimentError> {
    let scored = score_rows(model, table, insts)?;
    compare_scored(table, &scored, strategies, timing, sweeps)
}

pub fn compare_scored(
    table: &PerformanceTable,
    scored: &ScoredRows,
    strategies: &[Strategy],
    timing: Timing,
    sweeps: bool,
) -> Result<Comparison, ExperimentError> {
    let mut rows = Vec::with_capacity(strategies.len());
    let mut decisions = Vec::new();
    for s in strategies {
        let (row, d) = evaluate_strategy(s, table, scored, timing)?;
        rows.push(row);
        decisions.extend(d);
    }
    let sweep = if sweeps { run_sweep(table, scored, timing)? } else { Vec::new() };
    Ok(Comparison { rows, decisions, sweep })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Exhaustive search for the size-`k` solver subset with the lowest mean gap
/// over all table rows; the lexicographically first subset wins ties.
pub fn portfolio_baseline(table: &PerformanceTable, k: usize) -> Result<(Vec<usize>, f64), ExperimentError> {
    let m = table.n_solvers();
    if k == 0 || k > m {
        return Err(ExperimentError::Param(format!("portfolio size {k} outside 1..={m}")));
    }
    let count = binomial(m, k);
    if count > PORTFOLIO_CAP {
        return Err(ExperimentError::Param(format!("C({m}, {k}) = {count} subsets exceeds the cap of {PORTFOLIO_CAP}")));
    }
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = (subset.clone(), table.subset_mean_gap(&subset));
    loop {
        // Next combination in lexicographic order.
        let Some(i) = (0..k).rev().find(|&i| subset[i] < m - k + i) else { break };
        subset[i] += 1;
        for j in i + 1..k {
            subset[j] = subset[j - 1] + 1;
        }
        let gap = table.subset_mean_gap(&subset);
        if gap < best.1 {
            best = (subset.clone(), gap);
        }
    }
    Ok(best)
}

/// Report row for the best fixed portfolio of size `k` on `rows`.
pub fn portfolio_row(table: &PerformanceTable, rows: &[usize], k: usize, timing: Timing) -> Result<ReportRow, ExperimentError> {
    let (subset, _) = portfolio_baseline(&table.select_rows(rows), k)?;
    let names: Vec<&str> = subset.iter().map(|&s| table.solver_ids()[s].as_str()).collect();
    Ok(choice_row(format!("portfolio:{k}:{}", names.join("+")), table, rows, &vec![subset; rows.len()], &[], timing))
}
