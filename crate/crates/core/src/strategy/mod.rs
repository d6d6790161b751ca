//! Turning score vectors into solver subsets and running them.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::losses::softmax;
use crate::instance::{RoutingInstance, Solution};
use crate::zoo::{cell_seed, solve, PerformanceTable, SolverFailure, SolverHandle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("empty score vector")]
    Empty,
    #[error("strategy parameter: {0}")]
    Param(String),
    #[error("cannot parse strategy `{0}` (expected greedy | topk:K | reject:RATIO,K | topp:P)")]
    Parse(String),
    #[error("decision file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// A selection rule. Text form: `greedy`, `topk:K`, `reject:RATIO,K`, `topp:P`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    Greedy,
    TopK(usize),
    Reject { ratio: f64, k: usize },
    TopP(f64),
}

impl Strategy {
    /// Checks parameters against a zoo of `m` solvers.
    pub fn validate(&self, m: usize) -> Result<(), StrategyError> {
        let k_ok = |k: usize| {
            if k >= 1 && k <= m {
                Ok(())
            } else {
                Err(StrategyError::Param(format!("k = {k} outside 1..={m}")))
            }
        };
        match *self {
            Strategy::Greedy => Ok(()),
            Strategy::TopK(k) => k_ok(k),
            Strategy::Reject { ratio, k } => {
                if !(0.0..=1.0).contains(&ratio) {
                    return Err(StrategyError::Param(format!("reject ratio {ratio} outside [0, 1]")));
                }
                k_ok(k)
            }
            Strategy::TopP(p) => {
                if p > 0.0 && p <= 1.0 {
                    Ok(())
                } else {
                    Err(StrategyError::Param(format!("p = {p} outside (0, 1]")))
                }
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy => write!(f, "greedy"),
            Strategy::TopK(k) => write!(f, "topk:{k}"),
            Strategy::Reject { ratio, k } => write!(f, "reject:{ratio},{k}"),
            Strategy::TopP(p) => write!(f, "topp:{p}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || StrategyError::Parse(s.to_string());
        let t = s.trim();
        if t == "greedy" {
            return Ok(Strategy::Greedy);
        }
        let (name, arg) = t.split_once(':').ok_or_else(err)?;
        let float = |v: &str| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(err);
        let int = |v: &str| v.trim().parse::<usize>().map_err(|_| err());
        match name {
            "topk" => Ok(Strategy::TopK(int(arg)?)),
            "topp" => Ok(Strategy::TopP(float(arg)?)),
            "reject" => {
                let (r, k) = arg.split_once(',').ok_or_else(err)?;
                Ok(Strategy::Reject { ratio: float(r)?, k: int(k)? })
            }
            _ => Err(err()),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Chosen solvers for one instance, by descending score.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDecision {
    pub instance_id: String,
    pub chosen: Vec<usize>,
    /// Maximum softmax probability of the scores.
    pub confidence: f64,
    pub strategy: String,
}

/// Softmax response: the largest softmax probability.
pub fn confidence(scores: &[f64]) -> f64 {
    softmax(scores).into_iter().fold(0.0, f64::max)
}

/// Indices by descending score, ties by lowest index.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn decision(scores: &[f64], chosen: Vec<usize>, tag: String) -> SelectionDecision {
    SelectionDecision { instance_id: String::new(), chosen, confidence: confidence(scores), strategy: tag }
}

pub fn select_greedy(scores: &[f64]) -> Result<SelectionDecision, StrategyError> {
    if scores.is_empty() {
        return Err(StrategyError::Empty);
    }
    Ok(decision(scores, ranked(scores)[..1].to_vec(), Strategy::Greedy.to_string()))
}

pub fn select_topk(scores: &[f64], k: usize) -> Result<SelectionDecision, StrategyError> {
    if scores.is_empty() {
        return Err(StrategyError::Empty);
    }
    Strategy::TopK(k).validate(scores.len())?;
    Ok(decision(scores, ranked(scores)[..k].to_vec(), Strategy::TopK(k).to_string()))
}

/// Smallest descending-probability prefix with softmax mass at least `p`.
/// The comparison allows 1e-12 of rounding slack so `p` equal to a partial
/// sum on paper selects that prefix; `p = 1` always takes the whole zoo.
pub fn select_topp(scores: &[f64], p: f64) -> Result<SelectionDecision, StrategyError> {
    if scores.is_empty() {
        return Err(StrategyError::Empty);
    }
    Strategy::TopP(p).validate(scores.len())?;
    let probs = softmax(scores);
    let order = ranked(&probs);
    let mut mass = 0.0;
    let mut chosen = Vec::new();
    for &i in &order {
        chosen.push(i);
        mass += probs[i];
        if p < 1.0 && mass >= p - 1e-12 {
            break;
        }
    }
    Ok(decision(scores, chosen, Strategy::TopP(p).to_string()))
}

/// Threshold that puts `⌊ratio·n⌋` of `confidences` strictly below it (for
/// distinct values): the lower order statistic at that rank. Ratio 0 gives
/// `−∞` and ratio 1 gives `+∞`. The product is nudged by 1e-9 before the
/// floor so ratios like 0.29 over 100 items reject 29.
pub fn calibrate_rejection_threshold(confidences: &[f64], ratio: f64) -> Result<f64, StrategyError> {
    if confidences.is_empty() {
        return Err(StrategyError::Empty);
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(StrategyError::Param(format!("reject ratio {ratio} outside [0, 1]")));
    }
    let n = confidences.len();
    let k = ((ratio * n as f64) + 1e-9).floor() as usize;
    if k == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if k >= n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = confidences.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k])
}

/// Greedy when the confidence reaches `tau`, top-`k` otherwise.
pub fn select_rejection(scores: &[f64], tau: f64, k: usize) -> Result<SelectionDecision, StrategyError> {
    let mut d = if confidence(scores) >= tau { select_greedy(scores)? } else { select_topk(scores, k)? };
    d.strategy = format!("reject:{k}@{tau}");
    Ok(d)
}

/// Decisions for a batch of instances. A rejection strategy calibrates its
/// threshold on this batch unless `frozen_tau` is given.
pub fn decide_all(
    strategy: &Strategy,
    ids: &[String],
    scores: &[Vec<f64>],
    frozen_tau: Option<f64>,
) -> Result<Vec<SelectionDecision>, StrategyError> {
    assert_eq!(ids.len(), scores.len(), "one score row per instance");
    let m = scores.first().map_or(0, Vec::len);
    strategy.validate(m)?;
    let tag = strategy.to_string();
    let tau = match strategy {
        Strategy::Reject { ratio, .. } => match frozen_tau {
            Some(t) => t,
            None => {
                let conf: Vec<f64> = scores.iter().map(|s| confidence(s)).collect();
                calibrate_rejection_threshold(&conf, *ratio)?
            }
        },
        _ => f64::NAN,
    };
    ids.iter()
        .zip(scores)
        .map(|(id, s)| {
            let mut d = match *strategy {
                Strategy::Greedy => select_greedy(s)?,
                Strategy::TopK(k) => select_topk(s, k)?,
                Strategy::TopP(p) => select_topp(s, p)?,
                Strategy::Reject { k, .. } => select_rejection(s, tau, k)?,
            };
            d.instance_id = id.clone();
            d.strategy = tag.clone();
            Ok(d)
        })
        .collect()
}

/// Outcome of running a decision.
#[derive(Clone, Debug)]
pub struct Execution {
    /// Cheapest valid solution, ties by solver index.
    pub best: Option<(usize, Solution)>,
    pub failures: Vec<(usize, SolverFailure)>,
    /// Selection time plus every chosen solver's run time.
    pub total_time_ms: f64,
}

/// Runs every chosen solver with the same per-cell seeds the performance
/// table uses and keeps the cheapest valid solution.
pub fn execute_decision(
    inst: &RoutingInstance,
    decision: &SelectionDecision,
    zoo: &[SolverHandle],
    root_seed: u64,
    selection_time_ms: f64,
) -> Result<Execution, StrategyError> {
    if decision.chosen.is_empty() || decision.chosen.iter().any(|&i| i >= zoo.len()) {
        return Err(StrategyError::Param(format!("decision {:?} invalid for {} solvers", decision.chosen, zoo.len())));
    }
    let mut best: Option<(usize, Solution)> = None;
    let mut failures = Vec::new();
    let mut total = selection_time_ms;
    for &s in &decision.chosen {
        let handle = &zoo[s];
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(root_seed, &inst.id, &handle.id));
        let t0 = std::time::Instant::now();
        let result = solve(handle, inst, &mut rng);
        total += t0.elapsed().as_secs_f64() * 1000.0;
        match result {
            Ok(sol) => {
                let better = best
                    .as_ref()
                    .map_or(true, |(bs, b)| sol.objective < b.objective || (sol.objective == b.objective && s < *bs));
                if better {
                    best = Some((s, sol));
                }
            }
            Err(e) => failures.push((s, e)),
        }
    }
    Ok(Execution { best, failures, total_time_ms: total })
}

/// Outcome of a decision replayed against recorded table cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordedOutcome {
    pub winner: usize,
    pub objective: f64,
    pub gap: f64,
    pub time_ms: f64,
}

/// Minimum recorded objective over the chosen solvers (ties by index) and
/// the summed recorded time.
pub fn execute_recorded(table: &PerformanceTable, row: usize, chosen: &[usize], selection_time_ms: f64) -> RecordedOutcome {
    let mut winner = chosen[0];
    for &s in chosen {
        let (o, w) = (table.objective(row, s), table.objective(row, winner));
        if o < w || (o == w && s < winner) {
            winner = s;
        }
    }
    let time_ms = selection_time_ms + chosen.iter().map(|&s| table.time_ms(row, s)).sum::<f64>();
    RecordedOutcome { winner, objective: table.objective(row, winner), gap: table.gap(row, winner), time_ms }
}

/// One line of the decisions export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRecord {
    pub instance_id: String,
    pub strategy: String,
    pub chosen: Vec<String>,
    pub confidence: f64,
}

pub fn write_decisions_jsonl<W: Write>(mut w: W, decisions: &[SelectionDecision], solver_ids: &[String]) -> std::io::Result<()> {
    for d in decisions {
        let rec = DecisionRecord {
            instance_id: d.instance_id.clone(),
            strategy: d.strategy.clone(),
            chosen: d.chosen.iter().map(|&i| solver_ids[i].clone()).collect(),
            confidence: d.confidence,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a decisions export, resolving solver ids against `solver_ids`.
pub fn read_decisions_jsonl<R: BufRead>(r: R, solver_ids: &[String]) -> Result<Vec<SelectionDecision>, StrategyError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let fail = |message: String| StrategyError::Format { line: n + 1, message };
        let line = line.map_err(|e| fail(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DecisionRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        if rec.chosen.is_empty() {
            return Err(fail("empty chosen set".into()));
        }
        if !(0.0..=1.0).contains(&rec.confidence) {
            return Err(fail(format!("confidence {} outside [0, 1]", rec.confidence)));
        }
        let mut chosen = Vec::with_capacity(rec.chosen.len());
        for id in &rec.chosen {
            let i = solver_ids.iter().position(|s| s == id).ok_or_else(|| fail(format!("unknown solver `{id}`")))?;
            if chosen.contains(&i) {
                return Err(fail(format!("solver `{id}` chosen twice")));
            }
            chosen.push(i);
        }
        out.push(SelectionDecision { instance_id: rec.instance_id, chosen, confidence: rec.confidence, strategy: rec.strategy });
    }
    Ok(out)
}
