//! Tour construction and local search for the TSP built-ins.

use rand::seq::SliceRandom;
use rand::Rng;

use super::Dist;

pub fn nearest_neighbor(d: &Dist, start: usize) -> Vec<usize> {
    let n = d.n;
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if !visited[j] && d.at(cur, j) < best_d {
                best_d = d.at(cur, j);
                best = j;
            }
        }
        visited[best] = true;
        tour.push(best);
        cur = best;
    }
    tour
}

/// First-improvement 2-opt. `budget` caps the number of candidate moves
/// evaluated; returns the number actually evaluated.
pub fn two_opt(d: &Dist, tour: &mut [usize], budget: Option<u64>) -> u64 {
    let n = tour.len();
    if n < 4 {
        return 0;
    }
    let limit = budget.unwrap_or(u64::MAX);
    let mut evals = 0u64;
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 2 {
            let a = tour[i];
            let b = tour[i + 1];
            let dab = d.at(a, b);
            let j_end = if i == 0 { n - 1 } else { n };
            for j in i + 2..j_end {
                evals += 1;
                if evals > limit {
                    return limit;
                }
                let c = tour[j];
                let e = tour[(j + 1) % n];
                let delta = d.at(a, c) + d.at(b, e) - dab - d.at(c, e);
                if delta < -1e-12 {
                    tour[i + 1..=j].reverse();
                    improved = true;
                    break;
                }
            }
            if improved {
                break;
            }
        }
    }
    evals
}

/// Or-opt: relocate segments of 1–3 consecutive nodes, optionally reversed,
/// until no improving move remains.
pub fn or_opt(d: &Dist, tour: &mut Vec<usize>) {
    let n = tour.len();
    if n < 5 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        'outer: for seg_len in 1..=3usize {
            for i in 0..n {
                // segment tour[i..i+seg_len] (no wrap), neighbours p and q
                if i + seg_len > n {
                    break;
                }
                let p = tour[(i + n - 1) % n];
                let s0 = tour[i];
                let s1 = tour[i + seg_len - 1];
                let q = tour[(i + seg_len) % n];
                if p == s1 || q == s0 {
                    continue;
                }
                let removal = d.at(p, s0) + d.at(s1, q) - d.at(p, q);
                for k in 0..n {
                    let u = tour[k];
                    let v = tour[(k + 1) % n];
                    let in_seg = |x: usize| (i..i + seg_len).contains(&x);
                    if in_seg(k) || in_seg((k + 1) % n) || (k + 1) % n == i {
                        continue;
                    }
                    let fwd = d.at(u, s0) + d.at(s1, v) - d.at(u, v);
                    let rev = d.at(u, s1) + d.at(s0, v) - d.at(u, v);
                    let (ins, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                    if ins - removal < -1e-12 {
                        let mut seg: Vec<usize> = tour.drain(i..i + seg_len).collect();
                        if reversed {
                            seg.reverse();
                        }
                        let pos = tour.iter().position(|&x| x == u).expect("u in tour") + 1;
                        tour.splice(pos..pos, seg);
                        improved = true;
                        break 'outer;
                    }
                }
            }
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Greedy matching: add shortest edges that keep degrees ≤ 2 and create no
/// premature cycle, then close the resulting Hamiltonian path.
pub fn greedy_edge(d: &Dist) -> Vec<usize> {
    let n = d.n;
    if n <= 3 {
        return (0..n).collect();
    }
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((d.at(i, j), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut deg = vec![0u8; n];
    let mut adj = vec![[usize::MAX; 2]; n];
    let mut ds = DisjointSet::new(n);
    let mut added = 0;
    for (_, i, j) in edges {
        if added == n - 1 {
            break;
        }
        if deg[i] < 2 && deg[j] < 2 && ds.union(i, j) {
            adj[i][deg[i] as usize] = j;
            adj[j][deg[j] as usize] = i;
            deg[i] += 1;
            deg[j] += 1;
            added += 1;
        }
    }
    let start = (0..n).find(|&v| deg[v] < 2).unwrap_or(0);
    let mut tour = Vec::with_capacity(n);
    let mut prev = usize::MAX;
    let mut cur = start;
    loop {
        tour.push(cur);
        let next = adj[cur].iter().copied().find(|&x| x != usize::MAX && x != prev);
        match next {
            Some(x) if tour.len() < n => {
                prev = cur;
                cur = x;
            }
            _ => break,
        }
    }
    tour
}

fn cheapest_position(d: &Dist, tour: &[usize], k: usize) -> (usize, f64) {
    let m = tour.len();
    let mut best = (0, f64::INFINITY);
    for p in 0..m {
        let (a, b) = (tour[p], tour[(p + 1) % m]);
        let c = d.at(a, k) + d.at(k, b) - d.at(a, b);
        if c < best.1 {
            best = (p, c);
        }
    }
    best
}

/// Farthest insertion starting from node 0 and its farthest partner.
pub fn farthest_insertion(d: &Dist) -> Vec<usize> {
    let n = d.n;
    if n <= 3 {
        return (0..n).collect();
    }
    let far = (1..n).max_by(|&a, &b| d.at(0, a).total_cmp(&d.at(0, b))).unwrap_or(1);
    let mut tour = vec![0, far];
    let mut in_tour = vec![false; n];
    in_tour[0] = true;
    in_tour[far] = true;
    let mut to_tour: Vec<f64> = (0..n).map(|v| d.at(0, v).min(d.at(far, v))).collect();
    for _ in 2..n {
        let k = (0..n)
            .filter(|&v| !in_tour[v])
            .max_by(|&a, &b| to_tour[a].total_cmp(&to_tour[b]).then(b.cmp(&a)))
            .expect("unvisited node");
        let (p, _) = cheapest_position(d, &tour, k);
        tour.insert(p + 1, k);
        in_tour[k] = true;
        for v in 0..n {
            to_tour[v] = to_tour[v].min(d.at(k, v));
        }
    }
    tour
}

/// Indices of the convex hull in counter-clockwise order (Andrew's monotone chain).
pub fn convex_hull(coords: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coords.len()).collect();
    idx.sort_by(|&a, &b| {
        coords[a][0]
            .total_cmp(&coords[b][0])
            .then(coords[a][1].total_cmp(&coords[b][1]))
            .then(a.cmp(&b))
    });
    idx.dedup_by(|a, b| coords[*a] == coords[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        (coords[a][0] - coords[o][0]) * (coords[b][1] - coords[o][1])
            - (coords[a][1] - coords[o][1]) * (coords[b][0] - coords[o][0])
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &p in &idx {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in idx.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Convex hull as the initial subtour, then repeatedly insert the node with the
/// globally cheapest insertion cost.
pub fn hull_cheapest_insertion(d: &Dist, coords: &[[f64; 2]]) -> Vec<usize> {
    let n = d.n;
    let mut tour = convex_hull(coords);
    if tour.len() < 2 {
        tour = vec![0];
    }
    let mut in_tour = vec![false; n];
    for &v in &tour {
        in_tour[v] = true;
    }
    while tour.len() < n {
        if tour.len() == 1 {
            let k = (0..n).find(|&v| !in_tour[v]).expect("remaining node");
            tour.push(k);
            in_tour[k] = true;
            continue;
        }
        let mut best = (usize::MAX, 0, f64::INFINITY);
        for k in (0..n).filter(|&v| !in_tour[v]) {
            let (p, c) = cheapest_position(d, &tour, k);
            if c < best.2 {
                best = (k, p, c);
            }
        }
        tour.insert(best.1 + 1, best.0);
        in_tour[best.0] = true;
    }
    tour
}

/// Position of `(x, y)` along a Hilbert curve on a `2^order` grid.
fn hilbert_index(order: u32, mut x: u64, mut y: u64) -> u64 {
    let side = 1u64 << order;
    let mut d = 0u64;
    let mut s = side / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = side - 1 - x;
                y = side - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

/// Visit nodes in Hilbert-curve order over the unit square.
pub fn space_filling_curve(coords: &[[f64; 2]]) -> Vec<usize> {
    const ORDER: u32 = 16;
    let side = ((1u64 << ORDER) - 1) as f64;
    let keys: Vec<u64> = coords
        .iter()
        .map(|p| {
            let x = (p[0].clamp(0.0, 1.0) * side).round() as u64;
            let y = (p[1].clamp(0.0, 1.0) * side).round() as u64;
            hilbert_index(ORDER, x, y)
        })
        .collect();
    let mut tour: Vec<usize> = (0..coords.len()).collect();
    tour.sort_by_key(|&i| (keys[i], i));
    tour
}

fn tour_length(d: &Dist, t: &[usize]) -> f64 {
    (0..t.len()).map(|i| d.at(t[i], t[(i + 1) % t.len()])).sum()
}

/// Restarts 2-opt from random permutations until `budget` move evaluations are
/// spent; keeps the best tour. At least one (possibly truncated) descent runs.
pub fn multi_start_two_opt<R: Rng>(d: &Dist, budget: u64, rng: &mut R) -> Vec<usize> {
    let n = d.n;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut remaining = budget;
    loop {
        let mut t: Vec<usize> = (0..n).collect();
        t.shuffle(rng);
        let used = two_opt(d, &mut t, Some(remaining));
        let len = tour_length(d, &t);
        if best.as_ref().map_or(true, |(b, _)| len < *b) {
            best = Some((len, t));
        }
        remaining = remaining.saturating_sub(used.max(1));
        if remaining == 0 {
            break;
        }
    }
    best.expect("at least one descent").1
}
