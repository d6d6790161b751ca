//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! `cargo test --release --test acceptance -- 3 10` runs a subset. The desk
//! pipelines write to a fresh temporary directory unless
//! `ZOOSEL_ACCEPTANCE_DIR` names a directory to reuse (datasets and tables
//! found there are not rebuilt, so criterion 3's runtime then excludes them).

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zoosel::autodiff::{grad_check, grad_check_params, Graph, ParamStore, Tensor};
use zoosel::embed::{leave_one_out, PairHead};
use zoosel::encoder::{pooled_count, AttentionLayer, Encoder, EncoderConfig, EncoderMode};
use zoosel::experiment::{gen_data, run_pipeline, run_zoo, ExperimentConfig, ReportRow, Timing, DATA_DIR_ENV};
use zoosel::instance::{generate_dataset, validate_plan, GeneratorConfig, ProblemKind, RoutePlan, RoutingInstance};
use zoosel::model::{
    argmax, choice_accuracy, classification_loss, ranking_loss, selection_accuracy, train, FeatureSource, Mlp, ModelConfig, SelectionModel,
    TrainConfig,
};
use zoosel::strategy::{decide_all, execute_decision, execute_recorded, Strategy};
use zoosel::zoo::{
    build_performance_table, default_zoo, eliminate_zoo, solve, Builtin, PerformanceTable, Polish, SolverHandle,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn wake_gates(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let gates: Vec<_> = store.ids().filter(|&id| store.name(id).ends_with(".alpha")).collect();
    for id in gates {
        store.get_mut(id).data_mut()[0] = rng.gen_range(0.3..1.0);
    }
}

fn uniform_instance(kind: ProblemKind, id: String, n: usize, rng: &mut ChaCha8Rng) -> RoutingInstance {
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
    let demands: Vec<f64> = match kind {
        ProblemKind::Tsp => vec![],
        ProblemKind::Cvrp => (0..n).map(|i| if i == 0 { 0.0 } else { rng.gen_range(1..10) as f64 }).collect(),
    };
    RoutingInstance::from_unit_coords(id, kind, coords, demands, 30.0).unwrap()
}

fn enc_config(mode: EncoderMode, blocks: usize) -> EncoderConfig {
    EncoderConfig {
        embed_dim: 16,
        heads: 4,
        ff_hidden: 16,
        flat_layers: 2,
        hier_blocks: blocks,
        layers_per_block: 1,
        pool_ratio: 0.8,
        mode,
    }
}

/// Sum of `out ⊙ w` for a fixed random `w`, so every output entry matters.
fn weighted_sum(g: &mut Graph, out: zoosel::autodiff::Var, w: &Tensor) -> Result<zoosel::autodiff::Var, zoosel::autodiff::AutodiffError> {
    let c = g.constant(w.clone());
    let p = g.mul(out, c)?;
    Ok(g.sum(p))
}

fn random_like(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

// 1 -------------------------------------------------------------------------

fn c1_gradients() -> Verdict {
    const SEEDS: u64 = 20;
    let t0 = Instant::now();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, err: f64| {
        let e = worst.entry(name).or_insert(0.0);
        *e = e.max(err);
    };
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let n = rng.gen_range(3..=10);

        let mut store = ParamStore::new();
        let layer = AttentionLayer::new(&mut store, "l", 16, 4, 16, &mut rng).unwrap();
        wake_gates(&mut store, &mut rng);
        let x = random_like(n, 16, &mut rng);
        let w = random_like(n, 16, &mut rng);
        let err = grad_check_params(
            &store,
            |g, s| {
                let h = g.constant(x.clone());
                let o = layer.forward(g, s, h)?;
                weighted_sum(g, o, &w)
            },
            1e-5,
        )
        .unwrap();
        note("attention layer", err);

        let kind = if seed % 2 == 0 { ProblemKind::Tsp } else { ProblemKind::Cvrp };
        let mut store = ParamStore::new();
        let enc = Encoder::new(&enc_config(EncoderMode::Hierarchical, 1), kind, &mut store, "e", &mut rng).unwrap();
        wake_gates(&mut store, &mut rng);
        let inst = uniform_instance(kind, "g".into(), n, &mut rng);
        let w = random_like(1, enc.output_dim(), &mut rng);
        let err = grad_check_params(
            &store,
            |g, s| {
                let r = enc.encode(g, s, &inst).map_err(|e| match e {
                    zoosel::encoder::EncoderError::Autodiff(a) => a,
                    other => panic!("{other}"),
                })?;
                weighted_sum(g, r, &w)
            },
            1e-5,
        )
        .unwrap();
        note("hierarchical block", err);

        let mut store = ParamStore::new();
        let m = rng.gen_range(2..=6);
        let mlp = Mlp::new(&mut store, "h", &[33, 32, m], &mut rng);
        let x = random_like(1, 33, &mut rng);
        let w = random_like(1, m, &mut rng);
        let err = grad_check_params(
            &store,
            |g, s| {
                let h = g.constant(x.clone());
                let o = mlp.forward(g, s, h)?;
                weighted_sum(g, o, &w)
            },
            1e-5,
        )
        .unwrap();
        note("mlp head", err);

        let scores: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut phi: Vec<usize> = (0..m).collect();
        phi.shuffle(&mut rng);
        for ranking in [false, true] {
            let err = grad_check(
                |v| {
                    let mut g = Graph::new();
                    let s = g.constant(Tensor::row_vector(v));
                    let l = if ranking { g.plackett_luce_nll(s, &phi) } else { g.softmax_cross_entropy(s, phi[0]) }.unwrap();
                    g.backward(l).unwrap();
                    (g.value(l).item(), g.grad(s).unwrap().data().to_vec())
                },
                &scores,
                1e-5,
            );
            note(if ranking { "ranking loss" } else { "classification loss" }, err);
        }

        let mut store = ParamStore::new();
        let head = PairHead::new(&mut store, "p", 16, &[32], &mut rng);
        let inst = random_like(1, 16, &mut rng);
        let solvers = random_like(m, 16, &mut rng);
        let err = grad_check_params(
            &store,
            |g, s| {
                let i = g.constant(inst.clone());
                let e = g.constant(solvers.clone());
                let sc = head.score(g, s, i, e, n as f64 / 500.0)?;
                g.plackett_luce_nll(sc, &phi)
            },
            1e-5,
        )
        .unwrap();
        note("pair head", err);
    }
    let secs = t0.elapsed().as_secs_f64();
    let max = worst.values().copied().fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    verdict(
        max < 1e-4 && secs < 120.0,
        format!("max rel err {max:.2e} < 1e-4 over {SEEDS} seeds ({}), {secs:.1}s < 120s", parts.join(", ")),
    )
}

// 2 -------------------------------------------------------------------------

fn c2_loss_values() -> Verdict {
    let ce = classification_loss(&[0.7; 5], 3).unwrap();
    let rk = ranking_loss(&[-0.4, -0.4], &[1, 0]).unwrap();
    let one = ranking_loss(&[2.5], &[0]).unwrap();
    let (e1, e2) = ((ce - 5f64.ln()).abs(), (rk - 2f64.ln()).abs());
    verdict(
        e1 <= 1e-12 && e2 <= 1e-12 && one == 0.0,
        format!("|CE - ln5| = {e1:.1e}, |PL - ln2| = {e2:.1e}, PL(M=1) = {one}"),
    )
}

// 3 and 4 -------------------------------------------------------------------

struct DeskRun {
    kind: ProblemKind,
    aggregate: Vec<ReportRow>,
    elapsed: Duration,
}

fn desk_config(name: &str, work: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs_dir().join(name)).unwrap();
    let stem = name.trim_end_matches(".toml");
    cfg.out_dir = work.join(stem);
    cfg.dataset.root = Some(cfg.out_dir.join("data"));
    cfg
}

fn row<'a>(rows: &'a [ReportRow], pred: impl Fn(&str) -> bool) -> &'a ReportRow {
    rows.iter().find(|r| pred(&r.method)).expect("report row")
}

fn c3_selection_beats_single_best(runs: &[DeskRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let sb = row(&r.aggregate, |m| m.starts_with("single-best:")).gap_mean;
        let greedy = row(&r.aggregate, |m| m == "greedy").gap_mean;
        let top2 = row(&r.aggregate, |m| m == "topk:2").gap_mean;
        pass &= greedy <= 0.9 * sb && top2 <= greedy;
        parts.push(format!(
            "{:?}: greedy {greedy:.3}% vs 0.9 x single-best {:.3}%, top-2 {top2:.3}%",
            r.kind,
            0.9 * sb
        ));
    }
    let total: f64 = runs.iter().map(|r| r.elapsed.as_secs_f64()).sum();
    pass &= total < 1800.0;
    verdict(pass, format!("{}; runtime {:.1} min < 30", parts.join("; "), total / 60.0))
}

fn c4_topk_vs_portfolio(runs: &[DeskRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        for k in 1..=3 {
            let sel = if k == 1 { "greedy".to_string() } else { format!("topk:{k}") };
            let tk = row(&r.aggregate, |m| m == sel).gap_mean;
            let pf = row(&r.aggregate, |m| m.starts_with(&format!("portfolio:{k}:"))).gap_mean;
            pass &= tk <= pf + 0.05;
            parts.push(format!("{:?} k={k}: margin {:+.3}pp", r.kind, pf + 0.05 - tk));
        }
    }
    verdict(pass, parts.join(", "))
}

// 5 -------------------------------------------------------------------------

fn c5_interpolation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (n, m) = (500, 6);
    let names = ids("i", n);
    let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let picks = |s: &Strategy| -> Vec<(Vec<usize>, u64)> {
        decide_all(s, &names, &scores, None).unwrap().into_iter().map(|d| (d.chosen, d.confidence.to_bits())).collect()
    };
    let reject0 = picks(&Strategy::Reject { ratio: 0.0, k: 3 }) == picks(&Strategy::Greedy);
    let reject1 = picks(&Strategy::Reject { ratio: 1.0, k: 3 }) == picks(&Strategy::TopK(3));
    let full = picks(&Strategy::TopP(1.0)).iter().all(|(c, _)| c.len() == m);

    // Recorded execution on a random table.
    let obj: Vec<f64> = (0..n * m).map(|_| rng.gen_range(1.0..2.0)).collect();
    let table = PerformanceTable::from_matrices(names.clone(), ids("s", m), obj, vec![1.0; n * m], None).unwrap();
    let mut recorded_ok = true;
    for (r, s) in scores.iter().enumerate() {
        let mut prev = f64::INFINITY;
        for k in 1..=m {
            let d = zoosel::strategy::select_topk(s, k).unwrap();
            let o = execute_recorded(&table, r, &d.chosen, 0.0).objective;
            recorded_ok &= o <= prev;
            prev = o;
        }
    }

    // Live execution with the built-in TSP zoo.
    let zoo = default_zoo(ProblemKind::Tsp);
    let data = generate_dataset(&GeneratorConfig::new(ProblemKind::Tsp, 30, 60, 5), 0, 10).unwrap();
    let mut live_ok = true;
    for inst in &data {
        let s: Vec<f64> = (0..zoo.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut prev = f64::INFINITY;
        for k in 1..=zoo.len() {
            let d = zoosel::strategy::select_topk(&s, k).unwrap();
            let ex = execute_decision(inst, &d, &zoo, 0, 0.0).unwrap();
            let o = ex.best.expect("a valid solution").1.objective;
            live_ok &= o <= prev;
            prev = o;
        }
    }
    verdict(
        reject0 && reject1 && full && recorded_ok && live_ok,
        format!(
            "reject(0)=greedy {reject0}, reject(1)=top-k {reject1}, top-p(1) full zoo {full}, \
             cost nonincreasing in k: recorded {recorded_ok} ({n} rows), live {live_ok} (10 instances)"
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn gap_table(gaps: &[Vec<f64>], solvers: &[&str]) -> PerformanceTable {
    let inst = ids("I", gaps.len());
    let obj: Vec<f64> = gaps.iter().flatten().map(|g| 1.0 + g / 100.0).collect();
    let refs: BTreeMap<String, f64> = inst.iter().map(|i| (i.clone(), 1.0)).collect();
    let n = obj.len();
    PerformanceTable::from_matrices(inst, solvers.iter().map(|s| s.to_string()).collect(), obj, vec![1.0; n], Some(&refs)).unwrap()
}

fn c6_elimination() -> Verdict {
    let t = gap_table(&[vec![1.0, 2.0, 3.0], vec![4.0, 2.0, 5.0]], &["a", "b", "c"]);
    let rep = eliminate_zoo(&t, 0.01).unwrap();
    let first = rep.removed.first();
    let c_first = first.is_some_and(|r| r.solver_id == "c" && r.contribution == 0.0);

    let diag = gap_table(&[vec![0.0, 3.0, 3.0], vec![3.0, 0.0, 3.0], vec![3.0, 3.0, 0.0]], &["x", "y", "z"]);
    let kept = eliminate_zoo(&diag, 0.01).unwrap();
    let unchanged = kept.removed.is_empty() && kept.final_zoo == ["x", "y", "z"];
    verdict(
        c_first && unchanged,
        format!(
            "first removal {:?}, uniquely-best zoo kept {unchanged} (A = {:?})",
            first.map(|r| (&r.solver_id, r.contribution)),
            kept.final_contributions
        ),
    )
}

// 7 -------------------------------------------------------------------------

fn c7_encoder_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut identity = true;
    for kind in [ProblemKind::Tsp, ProblemKind::Cvrp] {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&enc_config(EncoderMode::Flat, 2), kind, &mut store, "e", &mut rng).unwrap();
        for n in [2, 7, 40] {
            let inst = uniform_instance(kind, "z".into(), n, &mut rng);
            let mut g = Graph::new();
            let rep = enc.encode(&mut g, &store, &inst).unwrap();
            let raw = Tensor::matrix(n, kind.feature_width(), inst.node_features());
            let h0 = enc.embed_nodes(&mut g, &store, raw).unwrap();
            let mean = g.mean_rows(h0).unwrap();
            identity &= g.value(rep) == g.value(mean);
        }
    }

    let mut store = ParamStore::new();
    let enc = Encoder::new(&enc_config(EncoderMode::Hierarchical, 2), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    let mut counts = true;
    for n in 1..=500usize {
        let expect = |k: usize| ((k as f64 * 0.8).floor() as usize).max(1);
        counts &= pooled_count(n, 0.8) == expect(n);
        let raw = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.gen()).collect());
        let mut prev = n;
        for kept in enc.pooling_trace(&store, raw).unwrap() {
            counts &= kept.len() == expect(prev);
            prev = kept.len();
        }
    }

    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&enc_config(EncoderMode::Hierarchical, 2), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
        wake_gates(&mut store, &mut rng);
        let n = rng.gen_range(10..=100);
        let inst = uniform_instance(ProblemKind::Tsp, "p".into(), n, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut p = inst.clone();
        p.coords = perm.iter().map(|&i| inst.coords[i]).collect();
        let a = enc.represent(&store, &inst).unwrap();
        let b = enc.represent(&store, &p).unwrap();
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    verdict(
        identity && counts && worst < 1e-9,
        format!("fresh flat = mean(H0) bitwise {identity}, pooled counts N=1..500 {counts}, permutation max diff {worst:.1e} < 1e-9"),
    )
}

// 8 -------------------------------------------------------------------------

fn brute_force_tsp(inst: &RoutingInstance) -> f64 {
    let n = inst.scale();
    if n <= 3 {
        return (0..n).map(|i| inst.dist(i, (i + 1) % n)).sum();
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let cost = |r: &[usize]| {
        let mut c = inst.dist(0, r[0]) + inst.dist(r[r.len() - 1], 0);
        for w in r.windows(2) {
            c += inst.dist(w[0], w[1]);
        }
        c
    };
    // Lexicographic next-permutation over the non-fixed nodes.
    let mut best = cost(&rest);
    loop {
        let Some(i) = (0..rest.len() - 1).rev().find(|&i| rest[i] < rest[i + 1]) else {
            return best;
        };
        let j = (i + 1..rest.len()).rev().find(|&j| rest[j] > rest[i]).unwrap();
        rest.swap(i, j);
        rest[i + 1..].reverse();
        best = best.min(cost(&rest));
    }
}

fn tsp_builtins() -> Vec<SolverHandle> {
    let mut zoo = vec![
        SolverHandle::builtin("nn", Builtin::NearestNeighbor2Opt { start: 0 }),
        SolverHandle::builtin("ms", Builtin::MultiStart2Opt { budget: 20_000 }),
    ];
    for p in [Polish::None, Polish::TwoOpt, Polish::OrOpt, Polish::TwoOptOrOpt] {
        zoo.push(SolverHandle::builtin(format!("ge-{p:?}"), Builtin::GreedyEdge { polish: p }));
        zoo.push(SolverHandle::builtin(format!("fi-{p:?}"), Builtin::FarthestInsertion { polish: p }));
        zoo.push(SolverHandle::builtin(format!("hull-{p:?}"), Builtin::HullCheapestInsertion { polish: p }));
        zoo.push(SolverHandle::builtin(format!("sfc-{p:?}"), Builtin::SpaceFillingCurve { polish: p }));
    }
    zoo
}

fn corruptions(inst: &RoutingInstance, plan: &RoutePlan) -> Vec<RoutePlan> {
    let n = inst.scale();
    let mut out = Vec::new();
    match plan {
        RoutePlan::Tour(t) => {
            out.push(RoutePlan::Tour(t[..n - 1].to_vec()));
            out.push(RoutePlan::Tour([t.as_slice(), &[t[0]]].concat()));
            let mut dup = t.clone();
            dup[n - 1] = dup[0];
            out.push(RoutePlan::Tour(dup));
            let mut oob = t.clone();
            oob[n / 2] = n;
            out.push(RoutePlan::Tour(oob));
            out.push(RoutePlan::Tour(vec![]));
            out.push(RoutePlan::Routes(vec![t.iter().copied().filter(|&v| v != 0).collect()]));
        }
        RoutePlan::Routes(routes) => {
            let mut drop = routes.clone();
            drop[0].pop();
            if drop[0].is_empty() {
                drop.remove(0);
            }
            out.push(RoutePlan::Routes(drop));
            let mut dup = routes.clone();
            let v = dup[0][0];
            dup.last_mut().unwrap().push(v);
            out.push(RoutePlan::Routes(dup));
            let mut depot = routes.clone();
            depot[0].insert(0, 0);
            out.push(RoutePlan::Routes(depot));
            let mut empty = routes.clone();
            empty.push(vec![]);
            out.push(RoutePlan::Routes(empty));
            let mut oob = routes.clone();
            oob[0][0] = n;
            out.push(RoutePlan::Routes(oob));
            let total: f64 = inst.demands.iter().sum();
            if total > inst.capacity {
                out.push(RoutePlan::Routes(vec![routes.concat()]));
            }
            out.push(RoutePlan::Tour((0..n).collect()));
        }
    }
    out
}

fn c8_brute_force_and_validators() -> Verdict {
    let zoo = tsp_builtins();
    let data = generate_dataset(&GeneratorConfig::new(ProblemKind::Tsp, 3, 9, 88), 0, 50).unwrap();
    let table = build_performance_table(&zoo, &data, 1, 0, None).unwrap();
    let mut below = 0;
    for (i, inst) in data.iter().enumerate() {
        let opt = brute_force_tsp(inst);
        below += (0..zoo.len()).filter(|&s| table.objective(i, s) < opt - 1e-9).count();
        below += usize::from(table.reference(i) < opt - 1e-9);
    }

    let mut total = 0;
    let mut accepted = 0;
    for kind in [ProblemKind::Tsp, ProblemKind::Cvrp] {
        let data = generate_dataset(&GeneratorConfig::new(kind, 5, 30, 89), 0, 50).unwrap();
        for (k, inst) in data.iter().enumerate() {
            for h in default_zoo(kind) {
                let sol = solve(&h, inst, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
                for bad in corruptions(inst, &sol.plan) {
                    total += 1;
                    accepted += usize::from(validate_plan(inst, &bad).is_ok());
                }
            }
        }
    }
    verdict(
        below == 0 && accepted == 0,
        format!(
            "{} builtins on 50 instances (N<=9): {below} below optimum; corrupted corpus: {}/{total} rejected",
            zoo.len(),
            total - accepted
        ),
    )
}

// 9 -------------------------------------------------------------------------

/// Instance `k mod m` has every node in vertical strip `k mod m`; solver
/// `k mod m` is the only good one on it.
fn strip_task(n: usize, m: usize, seed: u64) -> (Vec<RoutingInstance>, PerformanceTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut insts = Vec::with_capacity(n);
    let mut obj = Vec::with_capacity(n * m);
    for k in 0..n {
        let mode = rng.gen_range(0..m);
        let size = rng.gen_range(20..=40);
        let coords = (0..size)
            .map(|_| [(mode as f64 + rng.gen::<f64>()) / m as f64, rng.gen()])
            .collect();
        insts.push(RoutingInstance::from_unit_coords(format!("s{k}"), ProblemKind::Tsp, coords, vec![], 0.0).unwrap());
        obj.extend((0..m).map(|s| if s == mode { 1.0 } else { 1.5 + rng.gen::<f64>() }));
    }
    let names = insts.iter().map(|i| i.id.clone()).collect();
    let table = PerformanceTable::from_matrices(names, ids("solver", m), obj, vec![1.0; n * m], None).unwrap();
    (insts, table)
}

fn c9_accuracy() -> Verdict {
    let m = 4;
    let (insts, table) = strip_task(1_500, m, 99);
    let cfg = ModelConfig {
        features: FeatureSource::Neural,
        encoder: EncoderConfig {
            embed_dim: 8,
            heads: 2,
            ff_hidden: 8,
            flat_layers: 1,
            mode: EncoderMode::Flat,
            ..EncoderConfig::default()
        },
        head_hidden: vec![16],
        init_seed: 9,
    };
    let init = SelectionModel::new(&cfg, ProblemKind::Tsp, table.solver_ids().to_vec(), None).unwrap();
    // Random model: i.i.d. uniform scores per row.
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    let test_rows: Vec<usize> = (500..1_500).collect();
    let random_choice: Vec<usize> = test_rows
        .iter()
        .map(|_| argmax(&(0..m).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
        .collect();
    let random_acc = choice_accuracy(&table, &test_rows, &random_choice);
    let tc = TrainConfig { lr: 1e-2, epochs: 30, batch_size: 8, augment: false, ..TrainConfig::default() };
    let trained = train(init, &insts[..400], &insts[400..500], &table, &tc).unwrap().model;
    let acc = selection_accuracy(&trained, &table, &insts[500..]).unwrap();
    let chance = 100.0 / m as f64;
    verdict(
        acc >= 95.0 && (random_acc - chance).abs() <= 5.0,
        format!("trained greedy accuracy {acc:.1}% >= 95; random {random_acc:.1}% within 5pp of {chance:.0}% (1,000 rows)"),
    )
}

// 10 ------------------------------------------------------------------------

fn c10_unseen_solver(work: &Path) -> Verdict {
    let cfg = desk_config("tsp-desk.toml", work);
    let data = gen_data(&cfg).unwrap();
    let table = run_zoo(&cfg, &data).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    let (mut with2, mut without2) = (0.0, 0.0);
    for &seed in &cfg.seeds {
        let mut pair = cfg.pair.model.clone();
        pair.init_seed = seed;
        let tc = TrainConfig { seed, ..cfg.pair.train.clone() };
        let r = leave_one_out(&pair, &tc, cfg.kind, &table, &data.train, &data.val, &data.val, &data.test).unwrap();
        let top1_drop = r.top1_with - r.top1_without;
        pass &= r.top2_with <= r.top2_without && top1_drop <= 0.2;
        with2 += r.top2_with;
        without2 += r.top2_without;
        parts.push(format!(
            "seed {seed} ({}): top-2 {:.3}% -> {:.3}%, top-1 change {top1_drop:+.3}pp",
            r.removed, r.top2_without, r.top2_with
        ));
    }
    let k = cfg.seeds.len() as f64;
    verdict(pass, format!("{}; mean top-2 {:.3}% -> {:.3}%", parts.join("; "), without2 / k, with2 / k))
}

// 11 ------------------------------------------------------------------------

fn c11_determinism() -> Verdict {
    let run = |dir: &Path| {
        let mut cfg = ExperimentConfig::load(&configs_dir().join("tsp-desk.toml")).unwrap();
        cfg.out_dir = dir.to_path_buf();
        cfg.dataset.root = Some(dir.join("data"));
        cfg.dataset.train = 120;
        cfg.dataset.val = 40;
        cfg.dataset.test = 60;
        cfg.seeds = vec![0];
        cfg.train.epochs = 2;
        cfg.report.timing = Timing::Omit;
        run_pipeline(&cfg).unwrap();
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    let files = ["report.csv", "report.json", "seed-0/report.csv", "seed-0/decisions.jsonl", "seed-0/sweep.csv", "seed-0/model.ckpt"];
    let same: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap())
        .collect();
    verdict(same.len() == files.len(), format!("{}/{} artifacts byte-identical across two runs", same.len(), files.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    std::env::remove_var(DATA_DIR_ENV);
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: usize| wanted.is_empty() || wanted.contains(&k);

    let scratch = tempfile::tempdir().unwrap();
    let work = std::env::var_os("ZOOSEL_ACCEPTANCE_DIR").map_or_else(|| scratch.path().to_path_buf(), PathBuf::from);

    let mut failed = Vec::new();
    let mut report = |k: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        if !want(k) {
            return;
        }
        let t0 = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed.push(k);
        }
        let line = format!(
            "criterion {k:>2} [{}] {name}: {} ({:.1}s)\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t0.elapsed().as_secs_f64()
        );
        std::io::stdout().write_all(line.as_bytes()).unwrap();
    };

    report(1, "gradient fidelity", &mut c1_gradients);
    report(2, "analytic loss values", &mut c2_loss_values);

    let mut desk: Option<Vec<DeskRun>> = None;
    if want(3) || want(4) {
        let runs: Vec<DeskRun> = ["tsp-desk.toml", "cvrp-desk.toml"]
            .iter()
            .filter_map(|name| {
                let cfg = desk_config(name, &work);
                let t0 = Instant::now();
                match catch_unwind(|| run_pipeline(&cfg)) {
                    Ok(Ok(s)) => Some(DeskRun { kind: cfg.kind, aggregate: s.aggregate, elapsed: t0.elapsed() }),
                    Ok(Err(e)) => {
                        eprintln!("{name}: {e}");
                        None
                    }
                    Err(_) => None,
                }
            })
            .collect();
        if runs.len() == 2 {
            desk = Some(runs);
        }
    }
    let missing = || verdict(false, "desk pipeline did not complete");
    report(3, "selection beats single best", &mut || desk.as_deref().map_or_else(missing, c3_selection_beats_single_best));
    report(4, "top-k vs fixed portfolio", &mut || desk.as_deref().map_or_else(missing, c4_topk_vs_portfolio));
    report(5, "strategy interpolation", &mut c5_interpolation);
    report(6, "elimination", &mut c6_elimination);
    report(7, "encoder invariants", &mut c7_encoder_invariants);
    report(8, "brute-force sanity and validators", &mut c8_brute_force_and_validators);
    report(9, "accuracy sanity", &mut c9_accuracy);
    report(10, "unseen-solver generalization", &mut || c10_unseen_solver(&work));
    report(11, "determinism", &mut c11_determinism);

    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
