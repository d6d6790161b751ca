//! Hand-crafted instance features for the baseline selection models.

use std::collections::HashSet;
use std::io::Write;

use crate::instance::{InstanceError, ProblemKind, RoutingInstance};

/// Column order of the exported CSV (CVRP appends the last two).
pub const FEATURE_COLUMNS: [&str; 13] = [
    "dist_std",
    "centroid_x",
    "centroid_y",
    "radius",
    "distinct_dist_frac",
    "nnnd_var",
    "nnnd_cv",
    "cluster_ratio",
    "outlier_ratio",
    "mean_cluster_radius",
    "scale",
    "demand_mean",
    "demand_std",
];

pub fn feature_len(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Tsp => 11,
        ProblemKind::Cvrp => 13,
    }
}

pub const DBSCAN_MIN_PTS: usize = 4;

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.max(0.0).sqrt())
}

/// DBSCAN labels: `Some(cluster)` or `None` for noise. Core points have at
/// least `min_pts` neighbours within `eps`, themselves included.
pub fn dbscan(dist: &[f64], n: usize, eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| dist[i * n + j] <= eps).count() >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for i in (0..n).filter(|&i| core[i]) {
        if label[i].is_some() {
            continue;
        }
        label[i] = Some(next);
        let mut stack = vec![i];
        while let Some(j) = stack.pop() {
            for k in 0..n {
                if core[k] && label[k].is_none() && dist[j * n + k] <= eps {
                    label[k] = Some(next);
                    stack.push(k);
                }
            }
        }
        next += 1;
    }
    // border points join their nearest core point's cluster
    for i in (0..n).filter(|&i| !core[i]) {
        label[i] = (0..n)
            .filter(|&k| core[k] && dist[i * n + k] <= eps)
            .min_by(|&a, &b| dist[i * n + a].total_cmp(&dist[i * n + b]).then(a.cmp(&b)))
            .and_then(|k| label[k]);
    }
    label
}

/// 11 features for TSP, 13 for CVRP, in [`FEATURE_COLUMNS`] order.
pub fn manual_features(inst: &RoutingInstance) -> Result<Vec<f64>, InstanceError> {
    let n = inst.scale();
    if n < 2 {
        return Err(InstanceError::Domain(format!("{}: features need N >= 2", inst.id)));
    }
    let c = &inst.coords;
    let dist = inst.distance_matrix();

    let mut pair = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pair.push(dist[i * n + j]);
        }
    }
    let (_, dist_std) = mean_std(&pair);
    let distinct: HashSet<i64> = pair.iter().map(|d| (d * 1e6).round() as i64).collect();
    let distinct_frac = distinct.len() as f64 / pair.len() as f64;

    let cx = c.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let cy = c.iter().map(|p| p[1]).sum::<f64>() / n as f64;
    let radius = c.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).fold(0.0, f64::max);

    let nn: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| dist[i * n + j]).fold(f64::INFINITY, f64::min))
        .collect();
    let nn_mean = nn.iter().sum::<f64>() / n as f64;
    let (nnnd_var, nnnd_cv) = if nn_mean > 0.0 {
        let nnnd: Vec<f64> = nn.iter().map(|d| d / nn_mean).collect();
        let (m, s) = mean_std(&nnnd);
        (s * s, s / m)
    } else {
        (0.0, 0.0)
    };

    let labels = dbscan(&dist, n, 2.0 * nn_mean, DBSCAN_MIN_PTS);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let outliers = labels.iter().filter(|l| l.is_none()).count();
    let mut radii = Vec::with_capacity(n_clusters);
    for k in 0..n_clusters {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == Some(k)).collect();
        let mx = members.iter().map(|&i| c[i][0]).sum::<f64>() / members.len() as f64;
        let my = members.iter().map(|&i| c[i][1]).sum::<f64>() / members.len() as f64;
        radii.push(members.iter().map(|&i| (c[i][0] - mx).hypot(c[i][1] - my)).fold(0.0, f64::max));
    }
    let mean_cluster_radius = if radii.is_empty() {
        0.0
    } else {
        radii.iter().sum::<f64>() / radii.len() as f64
    };

    let mut f = vec![
        dist_std,
        cx,
        cy,
        radius,
        distinct_frac,
        nnnd_var,
        nnnd_cv,
        n_clusters as f64 / n as f64,
        outliers as f64 / n as f64,
        mean_cluster_radius,
        n as f64,
    ];
    if inst.kind == ProblemKind::Cvrp {
        let (m, s) = mean_std(&inst.demands[1..]);
        f.push(m);
        f.push(s);
    }
    Ok(f)
}

/// Writes `instance_id` followed by the feature columns, one row per instance.
pub fn write_features_csv<W: Write>(
    mut w: W,
    kind: ProblemKind,
    rows: &[(String, Vec<f64>)],
) -> std::io::Result<()> {
    let cols = &FEATURE_COLUMNS[..feature_len(kind)];
    writeln!(w, "instance_id,{}", cols.join(","))?;
    for (id, f) in rows {
        let vals: Vec<String> = f.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{id},{}", vals.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_dataset, GeneratorConfig, SYMMETRIES};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn tsp(coords: Vec<[f64; 2]>) -> RoutingInstance {
        RoutingInstance::from_unit_coords("t", ProblemKind::Tsp, coords, vec![], 0.0).unwrap()
    }

    #[test]
    fn unit_square_corners() {
        let f = manual_features(&tsp(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])).unwrap();
        assert_eq!(f.len(), 11);
        assert!((f[4] - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!((f[1], f[2]), (0.5, 0.5));
        assert!((f[3] - 0.5f64.sqrt()).abs() < 1e-15);
        // every node has NN distance 1
        assert_eq!((f[5], f[6]), (0.0, 0.0));
        assert_eq!(f[10], 4.0);
        // distances {1,1,1,1,√2,√2}
        let mean = (4.0 + 2.0 * 2f64.sqrt()) / 6.0;
        let var = (4.0 * (1.0 - mean).powi(2) + 2.0 * (2f64.sqrt() - mean).powi(2)) / 6.0;
        assert!((f[0] - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn coincident_nodes() {
        let f = manual_features(&tsp(vec![[0.3, 0.3]; 5])).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[4], 1.0 / 10.0);
        assert_eq!((f[5], f[6]), (0.0, 0.0));
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cvrp_adds_demand_moments() {
        let inst = RoutingInstance::from_unit_coords(
            "c",
            ProblemKind::Cvrp,
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![0.0, 2.0, 4.0],
            10.0,
        )
        .unwrap();
        let f = manual_features(&inst).unwrap();
        assert_eq!(f.len(), 13);
        assert!((f[11] - 0.3).abs() < 1e-15 && (f[12] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn dbscan_separates_blobs_and_noise() {
        let mut c = Vec::new();
        for k in 0..5 {
            c.push([0.1 + 0.01 * k as f64, 0.1]);
            c.push([0.9, 0.9 - 0.01 * k as f64]);
        }
        c.push([0.5, 0.5]);
        let inst = tsp(c);
        let l = dbscan(&inst.distance_matrix(), 11, 0.05, 4);
        assert_eq!(l[10], None);
        assert!(l[..10].iter().all(|x| x.is_some()));
        assert_ne!(l[0], l[1]);
        assert!((0..5).all(|k| l[2 * k] == l[0] && l[2 * k + 1] == l[1]));
    }

    fn nnnd_cv(coords: Vec<[f64; 2]>) -> f64 {
        manual_features(&tsp(coords)).unwrap()[6]
    }

    // Gaussian blobs have varying local density, so their nNNd spread exceeds
    // the uniform baseline (about 0.52 for a planar Poisson process).
    #[test]
    fn clustered_nnnd_cv_exceeds_uniform() {
        let n = 100;
        let (mut clustered, mut uniform) = (0.0, 0.0);
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
            let g = Normal::new(0.0, 0.02).unwrap();
            let c: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let m: f64 = if i % 2 == 0 { 0.25 } else { 0.75 };
                    [(m + g.sample(&mut rng)).clamp(0.0, 1.0), (m + g.sample(&mut rng)).clamp(0.0, 1.0)]
                })
                .collect();
            uniform += nnnd_cv(u) / 50.0;
            clustered += nnnd_cv(c) / 50.0;
        }
        assert!(clustered > uniform, "clustered {clustered} uniform {uniform}");
    }

    #[test]
    fn csv_header_and_rows() {
        let mut buf = Vec::new();
        write_features_csv(&mut buf, ProblemKind::Tsp, &[("a".into(), vec![0.5; 11])]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            "instance_id,dist_std,centroid_x,centroid_y,radius,distinct_dist_frac,nnnd_var,nnnd_cv,\
             cluster_ratio,outlier_ratio,mean_cluster_radius,scale"
        );
        assert_eq!(lines.next().unwrap().split(',').count(), 12);
    }

    #[test]
    fn too_small_rejected() {
        let mut inst = tsp(vec![[0.0, 0.0], [1.0, 1.0]]);
        inst.coords.pop();
        assert!(manual_features(&inst).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn symmetric_views_and_permutations(seed in 0u64..10_000) {
            let cfg = GeneratorConfig::new(ProblemKind::Cvrp, 5, 40, seed);
            let inst = generate_dataset(&cfg, 0, 1).unwrap().remove(0);
            let base = manual_features(&inst).unwrap();
            prop_assert!(base.iter().all(|v| v.is_finite()));
            prop_assert!((0.0..=1.0).contains(&base[4]) && (0.0..=1.0).contains(&base[7]) && (0.0..=1.0).contains(&base[8]));
            prop_assert!(base[0] >= 0.0 && base[5] >= 0.0);
            for sym in SYMMETRIES {
                let f = manual_features(&sym.transform(&inst)).unwrap();
                let moved = sym.apply([base[1], base[2]]);
                prop_assert!((f[1] - moved[0]).abs() < 1e-9 && (f[2] - moved[1]).abs() < 1e-9);
                for k in (0..f.len()).filter(|&k| k != 1 && k != 2) {
                    prop_assert!((f[k] - base[k]).abs() < 1e-9, "{sym:?} feature {k}: {} vs {}", f[k], base[k]);
                }
            }
            // reverse customer order, depot stays first
            let mut p = inst.clone();
            p.coords[1..].reverse();
            p.demands[1..].reverse();
            let f = manual_features(&p).unwrap();
            for k in 0..f.len() {
                prop_assert!((f[k] - base[k]).abs() < 1e-9, "perm feature {k}");
            }
        }
    }
}
