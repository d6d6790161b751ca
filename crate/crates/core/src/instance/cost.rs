use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InstanceError, ProblemKind, RoutingInstance};

/// Tour (TSP) or routes over customers `1..N` (CVRP, depot implicit at both ends).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutePlan {
    Tour(Vec<usize>),
    Routes(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: RoutePlan,
    pub objective: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ValidationError {
    #[error("plan kind does not match a {0:?} instance")]
    KindMismatch(ProblemKind),
    #[error("node {0} out of range")]
    OutOfRange(usize),
    #[error("tour has {got} nodes, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("node {0} visited more than once")]
    Duplicate(usize),
    #[error("customer {0} not visited")]
    MissingCustomer(usize),
    #[error("depot appears inside route {0}")]
    DepotInRoute(usize),
    #[error("route {0} is empty")]
    EmptyRoute(usize),
    #[error("route {route} exceeds capacity (load {load:.6})")]
    CapacityExceeded { route: usize, load: f64 },
}

const CAPACITY_TOL: f64 = 1e-9;

pub fn validate_plan(inst: &RoutingInstance, plan: &RoutePlan) -> Result<(), ValidationError> {
    let n = inst.scale();
    match (inst.kind, plan) {
        (ProblemKind::Tsp, RoutePlan::Tour(t)) => {
            if t.len() != n {
                return Err(ValidationError::WrongLength { expected: n, got: t.len() });
            }
            let mut seen = vec![false; n];
            for &v in t {
                if v >= n {
                    return Err(ValidationError::OutOfRange(v));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(ValidationError::Duplicate(v));
                }
            }
            Ok(())
        }
        (ProblemKind::Cvrp, RoutePlan::Routes(routes)) => {
            let mut seen = vec![false; n];
            for (r, route) in routes.iter().enumerate() {
                if route.is_empty() {
                    return Err(ValidationError::EmptyRoute(r));
                }
                let mut load = 0.0;
                for &v in route {
                    if v >= n {
                        return Err(ValidationError::OutOfRange(v));
                    }
                    if v == 0 {
                        return Err(ValidationError::DepotInRoute(r));
                    }
                    if std::mem::replace(&mut seen[v], true) {
                        return Err(ValidationError::Duplicate(v));
                    }
                    load += inst.demands[v];
                }
                if load > inst.capacity + CAPACITY_TOL {
                    return Err(ValidationError::CapacityExceeded { route: r, load });
                }
            }
            match (1..n).find(|&v| !seen[v]) {
                Some(v) => Err(ValidationError::MissingCustomer(v)),
                None => Ok(()),
            }
        }
        (kind, _) => Err(ValidationError::KindMismatch(kind)),
    }
}

/// Objective of `plan`: closed-tour length for TSP, sum of depot-to-depot
/// route lengths for CVRP.
pub fn tour_cost(inst: &RoutingInstance, plan: &RoutePlan) -> Result<f64, ValidationError> {
    validate_plan(inst, plan)?;
    Ok(match plan {
        RoutePlan::Tour(t) => {
            let n = t.len();
            (0..n).map(|i| inst.cost_dist(t[i], t[(i + 1) % n])).sum()
        }
        RoutePlan::Routes(routes) => routes
            .iter()
            .map(|r| {
                let inner: f64 = r.windows(2).map(|w| inst.cost_dist(w[0], w[1])).sum();
                inst.cost_dist(0, r[0]) + inner + inst.cost_dist(r[r.len() - 1], 0)
            })
            .sum(),
    })
}

/// `100 · (cost − reference) / reference`.
pub fn optimality_gap(cost: f64, reference: f64) -> Result<f64, InstanceError> {
    if !(reference > 0.0) {
        return Err(InstanceError::Domain(format!(
            "reference cost must be positive, got {reference}"
        )));
    }
    if cost < reference - 1e-9 {
        return Err(InstanceError::Domain(format!(
            "cost {cost} is below reference {reference}"
        )));
    }
    Ok(100.0 * (cost - reference) / reference)
}

/// Arithmetic mean of per-instance gaps.
pub fn mean_gap(pairs: &[(f64, f64)]) -> Result<f64, InstanceError> {
    if pairs.is_empty() {
        return Err(InstanceError::Domain("no costs to average".into()));
    }
    let mut total = 0.0;
    for &(c, r) in pairs {
        total += optimality_gap(c, r)?;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_dataset, GeneratorConfig};

    fn square() -> RoutingInstance {
        RoutingInstance::from_unit_coords(
            "sq",
            ProblemKind::Tsp,
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn unit_square_perimeter() {
        let inst = square();
        let t = RoutePlan::Tour(vec![0, 1, 2, 3]);
        assert_eq!(tour_cost(&inst, &t).unwrap(), 4.0);
        let r = RoutePlan::Tour(vec![3, 2, 1, 0]);
        assert_eq!(tour_cost(&inst, &r).unwrap(), 4.0);
    }

    #[test]
    fn validation_names_violation() {
        let inst = square();
        assert_eq!(
            tour_cost(&inst, &RoutePlan::Tour(vec![0, 1, 1, 3])),
            Err(ValidationError::Duplicate(1))
        );
        assert_eq!(
            tour_cost(&inst, &RoutePlan::Tour(vec![0, 1, 2])),
            Err(ValidationError::WrongLength { expected: 4, got: 3 })
        );
        assert_eq!(
            tour_cost(&inst, &RoutePlan::Routes(vec![vec![1]])),
            Err(ValidationError::KindMismatch(ProblemKind::Tsp))
        );

        let cvrp = RoutingInstance::from_unit_coords(
            "c",
            ProblemKind::Cvrp,
            vec![[0.5, 0.5], [0.0, 0.0], [1.0, 1.0]],
            vec![0.0, 6.0, 5.0],
            10.0,
        )
        .unwrap();
        assert!(matches!(
            tour_cost(&cvrp, &RoutePlan::Routes(vec![vec![1, 2]])),
            Err(ValidationError::CapacityExceeded { route: 0, .. })
        ));
        assert_eq!(
            tour_cost(&cvrp, &RoutePlan::Routes(vec![vec![1]])),
            Err(ValidationError::MissingCustomer(2))
        );
        assert_eq!(
            tour_cost(&cvrp, &RoutePlan::Routes(vec![vec![1], vec![0, 2]])),
            Err(ValidationError::DepotInRoute(1))
        );
        assert_eq!(
            tour_cost(&cvrp, &RoutePlan::Routes(vec![vec![1], vec![], vec![2]])),
            Err(ValidationError::EmptyRoute(1))
        );
        let ok = tour_cost(&cvrp, &RoutePlan::Routes(vec![vec![1], vec![2]])).unwrap();
        assert!((ok - 4.0 * 0.5f64.hypot(0.5)).abs() < 1e-15);
    }

    #[test]
    fn gaps() {
        assert!((optimality_gap(10.5, 10.0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(optimality_gap(7.0, 7.0).unwrap(), 0.0);
        assert!(optimality_gap(1.0, 0.0).is_err());
        assert!(optimality_gap(0.5, 1.0).is_err());
        let rows = [(11.0, 10.0), (3.0, 3.0), (4.4, 4.0)];
        let expected = (10.0 + 0.0 + 10.0) / 3.0;
        assert!((mean_gap(&rows).unwrap() - expected).abs() < 1e-12);
    }

    /// Exhaustive optimum over tours fixing node 0 first.
    fn brute_force(inst: &RoutingInstance) -> f64 {
        fn rec(inst: &RoutingInstance, path: &mut Vec<usize>, used: &mut [bool], len: f64, best: &mut f64) {
            let n = used.len();
            if path.len() == n {
                let total = len + inst.dist(path[n - 1], path[0]);
                *best = best.min(total);
                return;
            }
            for v in 1..n {
                if !used[v] {
                    used[v] = true;
                    let add = inst.dist(*path.last().unwrap(), v);
                    path.push(v);
                    rec(inst, path, used, len + add, best);
                    path.pop();
                    used[v] = false;
                }
            }
        }
        let mut used = vec![false; inst.scale()];
        used[0] = true;
        let mut best = f64::INFINITY;
        rec(inst, &mut vec![0], &mut used, 0.0, &mut best);
        best
    }

    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }

    #[test]
    fn tour_cost_minimum_matches_enumeration() {
        let cfg = GeneratorConfig::new(ProblemKind::Tsp, 9, 9, 21);
        let inst = &generate_dataset(&cfg, 0, 1).unwrap()[0];
        let opt = brute_force(inst);
        let mut all = Vec::new();
        permutations(&mut (1..9).collect(), 0, &mut all);
        let best = all
            .into_iter()
            .map(|mut p| {
                p.insert(0, 0);
                tour_cost(inst, &RoutePlan::Tour(p)).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((best - opt).abs() < 1e-12, "{best} vs {opt}");
    }
}
