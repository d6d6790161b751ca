//! Uniform solver interface, the built-in heuristic zoos, the external
//! JSON-lines adapter, performance tables and contribution-based elimination.

mod eliminate;
mod external;
pub mod heuristics;
mod table;

pub use eliminate::{eliminate_zoo, removal_degradations, Removal, ZooEliminationReport};
pub use external::{encode_request, external_solve, parse_response, AdapterRequest, AdapterResponse};
pub use table::{build_performance_table, cell_seed, zoo_statistics, CellRecord, PerformanceTable, ZooStatistics};

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{tour_cost, validate_plan, ProblemKind, RoutePlan, RoutingInstance, Solution, ValidationError};
use heuristics::{cvrp, tsp, Dist};

/// Which problem kinds a solver accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Tsp,
    Cvrp,
    Both,
}

impl Support {
    pub fn accepts(self, kind: ProblemKind) -> bool {
        matches!(
            (self, kind),
            (Support::Both, _) | (Support::Tsp, ProblemKind::Tsp) | (Support::Cvrp, ProblemKind::Cvrp)
        )
    }
}

/// Local search applied after a TSP construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polish {
    #[default]
    None,
    TwoOpt,
    OrOpt,
    TwoOptOrOpt,
}

fn one() -> usize {
    1
}

fn default_lambda() -> f64 {
    1.0
}

/// Built-in heuristics. Serialized with an `algorithm` tag, e.g.
/// `{"algorithm": "multi-start-2opt", "budget": 200000}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Builtin {
    #[serde(rename = "nn-2opt")]
    NearestNeighbor2Opt {
        #[serde(default)]
        start: usize,
    },
    GreedyEdge {
        #[serde(default)]
        polish: Polish,
    },
    FarthestInsertion {
        #[serde(default)]
        polish: Polish,
    },
    HullCheapestInsertion {
        #[serde(default)]
        polish: Polish,
    },
    SpaceFillingCurve {
        #[serde(default)]
        polish: Polish,
    },
    /// Budget counts 2-opt move evaluations across all restarts.
    #[serde(rename = "multi-start-2opt")]
    MultiStart2Opt { budget: u64 },
    ClarkeWright {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        route_2opt: bool,
        #[serde(default)]
        or_opt: bool,
    },
    /// Tries `starts` evenly spaced start angles from `start_angle` and keeps
    /// the cheapest result.
    #[serde(rename = "sweep-2opt")]
    Sweep2Opt {
        #[serde(default)]
        start_angle: f64,
        #[serde(default = "one")]
        starts: usize,
        #[serde(default)]
        or_opt: bool,
    },
    #[serde(rename = "nn-routes-2opt")]
    NearestNeighborRoutes2Opt {
        #[serde(default)]
        or_opt: bool,
    },
    /// Without a budget: one savings run polished to convergence. With one:
    /// randomized restarts sharing `budget` Or-opt insertion evaluations.
    SavingsOrOpt {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<u64>,
    },
}

impl Builtin {
    pub fn support(&self) -> Support {
        match self {
            Builtin::NearestNeighbor2Opt { .. }
            | Builtin::GreedyEdge { .. }
            | Builtin::FarthestInsertion { .. }
            | Builtin::HullCheapestInsertion { .. }
            | Builtin::SpaceFillingCurve { .. }
            | Builtin::MultiStart2Opt { .. } => Support::Tsp,
            _ => Support::Cvrp,
        }
    }

    /// Runs the heuristic and returns an unvalidated plan.
    pub fn plan<R: Rng>(&self, inst: &RoutingInstance, rng: &mut R) -> RoutePlan {
        let d = Dist::new(inst);
        let polish = |mut t: Vec<usize>, p: Polish| {
            if matches!(p, Polish::TwoOpt | Polish::TwoOptOrOpt) {
                tsp::two_opt(&d, &mut t, None);
            }
            if matches!(p, Polish::OrOpt | Polish::TwoOptOrOpt) {
                tsp::or_opt(&d, &mut t);
            }
            t
        };
        match *self {
            Builtin::NearestNeighbor2Opt { start } => {
                let mut t = tsp::nearest_neighbor(&d, start.min(d.n - 1));
                tsp::two_opt(&d, &mut t, None);
                RoutePlan::Tour(t)
            }
            Builtin::GreedyEdge { polish: p } => RoutePlan::Tour(polish(tsp::greedy_edge(&d), p)),
            Builtin::FarthestInsertion { polish: p } => RoutePlan::Tour(polish(tsp::farthest_insertion(&d), p)),
            Builtin::HullCheapestInsertion { polish: p } => {
                RoutePlan::Tour(polish(tsp::hull_cheapest_insertion(&d, &inst.coords), p))
            }
            Builtin::SpaceFillingCurve { polish: p } => {
                RoutePlan::Tour(polish(tsp::space_filling_curve(&inst.coords), p))
            }
            Builtin::MultiStart2Opt { budget } => RoutePlan::Tour(tsp::multi_start_two_opt(&d, budget, rng)),
            Builtin::ClarkeWright {
                lambda,
                route_2opt,
                or_opt,
            } => {
                let mut r = cvrp::clarke_wright(&d, &inst.demands, lambda);
                if or_opt {
                    cvrp::or_opt(&d, &inst.demands, &mut r, None);
                }
                if route_2opt {
                    cvrp::route_two_opt(&d, &mut r);
                }
                RoutePlan::Routes(r)
            }
            Builtin::Sweep2Opt {
                start_angle,
                starts,
                or_opt,
            } => {
                let starts = starts.max(1);
                let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
                for k in 0..starts {
                    let a = start_angle + std::f64::consts::TAU * k as f64 / starts as f64;
                    let mut r = cvrp::sweep(&inst.coords, &inst.demands, a);
                    cvrp::route_two_opt(&d, &mut r);
                    if or_opt {
                        cvrp::or_opt(&d, &inst.demands, &mut r, None);
                        cvrp::route_two_opt(&d, &mut r);
                    }
                    let c = cvrp::routes_length(&d, &r);
                    if best.as_ref().map_or(true, |b| c < b.0) {
                        best = Some((c, r));
                    }
                }
                RoutePlan::Routes(best.expect("at least one start").1)
            }
            Builtin::NearestNeighborRoutes2Opt { or_opt } => {
                let mut r = cvrp::nearest_neighbor_routes(&d, &inst.demands);
                cvrp::route_two_opt(&d, &mut r);
                if or_opt {
                    cvrp::or_opt(&d, &inst.demands, &mut r, None);
                    cvrp::route_two_opt(&d, &mut r);
                }
                RoutePlan::Routes(r)
            }
            Builtin::SavingsOrOpt { lambda, budget: None } => {
                let mut r = cvrp::clarke_wright(&d, &inst.demands, lambda);
                cvrp::or_opt(&d, &inst.demands, &mut r, None);
                cvrp::route_two_opt(&d, &mut r);
                RoutePlan::Routes(r)
            }
            Builtin::SavingsOrOpt {
                lambda,
                budget: Some(b),
            } => RoutePlan::Routes(cvrp::multi_start_savings_or_opt(&d, &inst.demands, lambda, b, rng)),
        }
    }
}

/// Launch spec for a solver speaking the JSON-lines adapter protocol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub timeout_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Builtin(Builtin),
    External(ExternalSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverHandle {
    pub id: String,
    pub backend: Backend,
    /// Defaults to what the built-in supports; required for external solvers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports: Option<Support>,
}

impl SolverHandle {
    pub fn builtin(id: impl Into<String>, algo: Builtin) -> Self {
        Self {
            id: id.into(),
            backend: Backend::Builtin(algo),
            supports: None,
        }
    }

    pub fn external(id: impl Into<String>, command: Vec<String>, timeout: Duration, supports: Support) -> Self {
        Self {
            id: id.into(),
            backend: Backend::External(ExternalSpec {
                command,
                timeout_ms: timeout.as_millis() as u64,
            }),
            supports: Some(supports),
        }
    }

    pub fn support(&self) -> Support {
        match (&self.supports, &self.backend) {
            (Some(s), _) => *s,
            (None, Backend::Builtin(b)) => b.support(),
            (None, Backend::External(_)) => Support::Both,
        }
    }
}

/// Checks handle-level invariants over a whole zoo.
pub fn validate_zoo(zoo: &[SolverHandle]) -> Result<(), ZooError> {
    if zoo.is_empty() {
        return Err(ZooError::Config("zoo is empty".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for h in zoo {
        if !seen.insert(h.id.as_str()) {
            return Err(ZooError::Config(format!("duplicate solver id `{}`", h.id)));
        }
        if let Backend::External(spec) = &h.backend {
            if spec.timeout_ms == 0 {
                return Err(ZooError::Config(format!("solver `{}`: timeout must be > 0", h.id)));
            }
            if spec.command.is_empty() {
                return Err(ZooError::Config(format!("solver `{}`: empty command", h.id)));
            }
        }
    }
    Ok(())
}

/// The built-in 6-solver TSP zoo or 4-solver CVRP zoo. Parameters are set so
/// that wins spread across solvers with a dependence on instance size (TSP)
/// and on customers per route (CVRP).
pub fn default_zoo(kind: ProblemKind) -> Vec<SolverHandle> {
    match kind {
        ProblemKind::Tsp => vec![
            SolverHandle::builtin("nn-2opt", Builtin::NearestNeighbor2Opt { start: 0 }),
            SolverHandle::builtin("greedy-edge", Builtin::GreedyEdge { polish: Polish::TwoOptOrOpt }),
            SolverHandle::builtin("farthest-insertion", Builtin::FarthestInsertion { polish: Polish::OrOpt }),
            SolverHandle::builtin(
                "hull-insertion",
                Builtin::HullCheapestInsertion {
                    polish: Polish::TwoOptOrOpt,
                },
            ),
            SolverHandle::builtin(
                "space-filling-curve",
                Builtin::SpaceFillingCurve {
                    polish: Polish::TwoOptOrOpt,
                },
            ),
            SolverHandle::builtin("multi-start-2opt", Builtin::MultiStart2Opt { budget: 6_000_000 }),
        ],
        ProblemKind::Cvrp => vec![
            SolverHandle::builtin(
                "clarke-wright",
                Builtin::ClarkeWright {
                    lambda: 1.4,
                    route_2opt: true,
                    or_opt: true,
                },
            ),
            SolverHandle::builtin(
                "sweep-2opt",
                Builtin::Sweep2Opt {
                    start_angle: 0.0,
                    starts: 8,
                    or_opt: true,
                },
            ),
            SolverHandle::builtin("nn-routes-2opt", Builtin::NearestNeighborRoutes2Opt { or_opt: true }),
            SolverHandle::builtin(
                "savings-oropt",
                Builtin::SavingsOrOpt {
                    lambda: 0.8,
                    budget: None,
                },
            ),
        ],
    }
}

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("zoo configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed performance table at line {line}: {message}")]
    TableFormat { line: usize, message: String },
}

/// Why a solve produced no usable solution.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum SolverFailure {
    #[error("solver `{solver}` does not support {kind:?}")]
    Unsupported { solver: String, kind: ProblemKind },
    #[error("could not launch `{0}`: {1}")]
    Launch(String, String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("solver exited with status {0}")]
    Exit(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("solver reported error: {0}")]
    Reported(String),
    #[error("invalid solution: {0}")]
    Invalid(#[from] ValidationError),
}

/// Runs `handle` on `inst`. Built-ins are deterministic given `rng`'s state.
pub fn solve<R: Rng>(handle: &SolverHandle, inst: &RoutingInstance, rng: &mut R) -> Result<Solution, SolverFailure> {
    if !handle.support().accepts(inst.kind) {
        return Err(SolverFailure::Unsupported {
            solver: handle.id.clone(),
            kind: inst.kind,
        });
    }
    match &handle.backend {
        Backend::Builtin(b) => {
            let t0 = Instant::now();
            let plan = b.plan(inst, rng);
            let wall_time = t0.elapsed().as_secs_f64();
            validate_plan(inst, &plan)?;
            let objective = tour_cost(inst, &plan)?;
            Ok(Solution {
                plan,
                objective,
                wall_time,
            })
        }
        Backend::External(spec) => external_solve(
            &spec.command,
            inst,
            Duration::from_millis(spec.timeout_ms),
        ),
    }
}
