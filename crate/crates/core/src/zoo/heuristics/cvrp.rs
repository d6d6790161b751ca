//! Route construction and improvement for the CVRP built-ins. Routes list
//! customers only; the depot (node 0) is implicit at both ends.

use super::{tsp, Dist};

const CAP: f64 = 1.0 + 1e-9;

fn load(route: &[usize], demand: &[f64]) -> f64 {
    route.iter().map(|&v| demand[v]).sum()
}

/// Total length of depot-to-depot routes under normalized distances.
pub fn routes_length(d: &Dist, routes: &[Vec<usize>]) -> f64 {
    routes
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let inner: f64 = r.windows(2).map(|w| d.at(w[0], w[1])).sum();
            d.at(0, r[0]) + inner + d.at(r[r.len() - 1], 0)
        })
        .sum()
}

/// Parallel savings with route-shape parameter `lambda`:
/// `s(i, j) = d(0, i) + d(0, j) − λ·d(i, j)`; only positive savings merge.
pub fn clarke_wright(d: &Dist, demand: &[f64], lambda: f64) -> Vec<Vec<usize>> {
    let n = d.n;
    if n < 2 {
        return Vec::new();
    }
    let mut routes: Vec<Vec<usize>> = (1..n).map(|i| vec![i]).collect();
    let mut route_of: Vec<usize> = (0..n).map(|i| i.saturating_sub(1)).collect();
    let mut loads: Vec<f64> = (1..n).map(|i| demand[i]).collect();
    let mut savings = Vec::with_capacity((n - 1) * (n - 2) / 2);
    for i in 1..n {
        for j in i + 1..n {
            let s = d.at(0, i) + d.at(0, j) - lambda * d.at(i, j);
            if s > 1e-12 {
                savings.push((s, i, j));
            }
        }
    }
    savings.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, i, j) in savings {
        let (ri, rj) = (route_of[i], route_of[j]);
        if ri == rj || loads[ri] + loads[rj] > CAP {
            continue;
        }
        let (i_first, i_last) = (routes[ri][0] == i, *routes[ri].last().unwrap() == i);
        let (j_first, j_last) = (routes[rj][0] == j, *routes[rj].last().unwrap() == j);
        if !(i_first || i_last) || !(j_first || j_last) {
            continue;
        }
        let mut a = std::mem::take(&mut routes[ri]);
        let mut b = std::mem::take(&mut routes[rj]);
        if !i_last {
            a.reverse();
        }
        if !j_first {
            b.reverse();
        }
        for &v in &b {
            route_of[v] = ri;
        }
        a.extend(b);
        routes[ri] = a;
        loads[ri] += loads[rj];
        loads[rj] = 0.0;
    }
    routes.retain(|r| !r.is_empty());
    routes
}

/// Polar sweep around the depot starting at `start_angle` (radians), cutting
/// a new route whenever the next customer would overflow capacity.
pub fn sweep(coords: &[[f64; 2]], demand: &[f64], start_angle: f64) -> Vec<Vec<usize>> {
    let depot = coords[0];
    let tau = std::f64::consts::TAU;
    let key = |v: usize| {
        let a = (coords[v][1] - depot[1]).atan2(coords[v][0] - depot[0]);
        (a - start_angle).rem_euclid(tau)
    };
    let mut order: Vec<usize> = (1..coords.len()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut routes = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut l = 0.0;
    for v in order {
        if l + demand[v] > CAP && !cur.is_empty() {
            routes.push(std::mem::take(&mut cur));
            l = 0.0;
        }
        cur.push(v);
        l += demand[v];
    }
    if !cur.is_empty() {
        routes.push(cur);
    }
    routes
}

/// Greedy route builder: extend the current route to the nearest customer
/// that still fits, return to the depot when none does.
pub fn nearest_neighbor_routes(d: &Dist, demand: &[f64]) -> Vec<Vec<usize>> {
    let n = d.n;
    let mut visited = vec![false; n];
    visited[0] = true;
    let mut left = n - 1;
    let mut routes = Vec::new();
    let mut route = Vec::new();
    let (mut cur, mut l) = (0usize, 0.0);
    while left > 0 {
        let next = (1..n)
            .filter(|&j| !visited[j] && l + demand[j] <= CAP)
            .min_by(|&a, &b| d.at(cur, a).total_cmp(&d.at(cur, b)).then(a.cmp(&b)));
        match next {
            Some(j) => {
                visited[j] = true;
                left -= 1;
                route.push(j);
                l += demand[j];
                cur = j;
            }
            None => {
                routes.push(std::mem::take(&mut route));
                cur = 0;
                l = 0.0;
            }
        }
    }
    if !route.is_empty() {
        routes.push(route);
    }
    routes
}

/// 2-opt on each route independently, with the depot pinned at position 0.
pub fn route_two_opt(d: &Dist, routes: &mut [Vec<usize>]) {
    for r in routes.iter_mut() {
        if r.len() < 3 {
            continue;
        }
        let mut t = Vec::with_capacity(r.len() + 1);
        t.push(0);
        t.extend_from_slice(r);
        tsp::two_opt(d, &mut t, None);
        debug_assert_eq!(t[0], 0);
        r.clear();
        r.extend_from_slice(&t[1..]);
    }
}

fn at_or_depot(route: &[usize], k: isize) -> usize {
    if k < 0 || k as usize >= route.len() {
        0
    } else {
        route[k as usize]
    }
}

/// Or-opt across routes: relocate chains of 1–3 customers (either
/// orientation) to the best feasible position in any route, first-improvement,
/// until a full pass finds nothing or `budget` insertion evaluations are
/// spent. Empty routes are dropped. Returns the evaluations used.
pub fn or_opt(d: &Dist, demand: &[f64], routes: &mut Vec<Vec<usize>>, budget: Option<u64>) -> u64 {
    let limit = budget.unwrap_or(u64::MAX);
    let mut evals = 0u64;
    let mut loads: Vec<f64> = routes.iter().map(|r| load(r, demand)).collect();
    'outer: loop {
        let mut moved = false;
        'search: for r in 0..routes.len() {
            for len in 1..=3usize {
                let rl = routes[r].len();
                if rl < len {
                    continue;
                }
                for i in 0..=rl - len {
                    let seg = &routes[r][i..i + len];
                    let (s0, s1) = (seg[0], seg[len - 1]);
                    let p = at_or_depot(&routes[r], i as isize - 1);
                    let q = at_or_depot(&routes[r], (i + len) as isize);
                    let removal = d.at(p, s0) + d.at(s1, q) - d.at(p, q);
                    let seg_load = load(seg, demand);
                    let mut rest = routes[r].clone();
                    rest.drain(i..i + len);
                    let mut best: Option<(f64, usize, usize, bool)> = None;
                    for t in 0..routes.len() {
                        let base: &[usize] = if t == r { &rest } else { &routes[t] };
                        if t != r && (base.is_empty() || loads[t] + seg_load > CAP) {
                            continue;
                        }
                        evals += base.len() as u64 + 1;
                        if evals > limit {
                            break 'outer;
                        }
                        for k in 0..=base.len() {
                            if t == r && k == i {
                                continue;
                            }
                            let u = at_or_depot(base, k as isize - 1);
                            let v = at_or_depot(base, k as isize);
                            let fwd = d.at(u, s0) + d.at(s1, v) - d.at(u, v);
                            let rev = d.at(u, s1) + d.at(s0, v) - d.at(u, v);
                            let (c, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                            if c - removal < -1e-12 && best.map_or(true, |b| c < b.0) {
                                best = Some((c, t, k, reversed));
                            }
                        }
                    }
                    if let Some((_, t, k, reversed)) = best {
                        let mut chain: Vec<usize> = routes[r][i..i + len].to_vec();
                        if reversed {
                            chain.reverse();
                        }
                        routes[r] = rest;
                        routes[t].splice(k..k, chain);
                        loads[r] -= seg_load;
                        loads[t] += seg_load;
                        moved = true;
                        break 'search;
                    }
                }
            }
        }
        if !moved {
            break;
        }
    }
    routes.retain(|r| !r.is_empty());
    evals.min(limit)
}

/// Savings + Or-opt restarted under a shared evaluation budget. The first run
/// uses `lambda`; later runs draw the shape parameter from U(0.6, 1.6). Keeps
/// the cheapest plan; a run cut short by the budget still counts.
pub fn multi_start_savings_or_opt<R: rand::Rng>(
    d: &Dist,
    demand: &[f64],
    lambda: f64,
    budget: u64,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    let mut remaining = budget;
    let mut lam = lambda;
    loop {
        let mut r = clarke_wright(d, demand, lam);
        let used = or_opt(d, demand, &mut r, Some(remaining));
        route_two_opt(d, &mut r);
        let c = routes_length(d, &r);
        if best.as_ref().map_or(true, |b| c < b.0) {
            best = Some((c, r));
        }
        remaining = remaining.saturating_sub(used.max(1));
        if remaining == 0 {
            break;
        }
        lam = rng.gen_range(0.6..1.6);
    }
    best.expect("at least one run").1
}
