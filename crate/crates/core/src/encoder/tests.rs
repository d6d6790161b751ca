use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, CheckpointError};
use super::*;
use crate::autodiff::grad_check_params;

fn small(mode: EncoderMode) -> EncoderConfig {
    EncoderConfig {
        embed_dim: 16,
        heads: 4,
        ff_hidden: 24,
        flat_layers: 2,
        hier_blocks: 2,
        layers_per_block: 1,
        pool_ratio: 0.8,
        mode,
    }
}

fn random_instance(kind: ProblemKind, n: usize, rng: &mut ChaCha8Rng) -> RoutingInstance {
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
    let demands: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { rng.gen_range(1..10) as f64 }).collect();
    RoutingInstance::from_unit_coords("r", kind, coords, demands, 30.0).unwrap()
}

/// Moves every ReZero gate off zero so the layers do real work.
fn wake_gates(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().filter(|&id| store.name(id).ends_with(".alpha")).collect();
    for id in ids {
        store.get_mut(id).data_mut()[0] = rng.gen_range(0.3..1.0);
    }
}

fn permuted(inst: &RoutingInstance, perm: &[usize]) -> RoutingInstance {
    let mut p = inst.clone();
    p.coords = perm.iter().map(|&i| inst.coords[i]).collect();
    if !inst.demands.is_empty() {
        p.demands = perm.iter().map(|&i| inst.demands[i]).collect();
    }
    p
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

#[test]
fn config_validation() {
    assert!(EncoderConfig::default().validate().is_ok());
    let mut c = EncoderConfig::default();
    c.heads = 7;
    assert!(matches!(c.validate(), Err(EncoderError::Config(_))));
    c = EncoderConfig::default();
    c.pool_ratio = 1.0;
    assert!(c.validate().is_err());
    c.pool_ratio = 0.0;
    assert!(c.validate().is_err());
    c = EncoderConfig::default();
    c.hier_blocks = 0;
    assert!(c.validate().is_err());
}

#[test]
fn embed_shapes_and_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&small(EncoderMode::Flat), ProblemKind::Cvrp, &mut store, "e", &mut rng).unwrap();
    assert_eq!(store.get(enc.embed_param()).shape(), &[3, 16]);
    for n in [1, 5, 17] {
        let mut g = Graph::new();
        let h = enc.embed_nodes(&mut g, &store, Tensor::zeros(n, 3)).unwrap();
        assert_eq!(g.value(h).shape(), &[n, 16]);
    }
    let mut g = Graph::new();
    assert!(enc.embed_nodes(&mut g, &store, Tensor::zeros(4, 2)).is_err());

    *store.get_mut(enc.embed_param()) = Tensor::zeros(3, 16);
    let mut g = Graph::new();
    let h = enc.embed_nodes(&mut g, &store, Tensor::filled(4, 3, 0.7)).unwrap();
    assert!(g.value(h).data().iter().all(|&v| v == 0.0));

    let mut eye = Tensor::zeros(3, 16);
    for i in 0..3 {
        eye.data_mut()[i * 16 + i] = 1.0;
    }
    *store.get_mut(enc.embed_param()) = eye;
    let mut g = Graph::new();
    let h = enc.embed_nodes(&mut g, &store, Tensor::matrix(1, 3, vec![0.2, 0.9, 0.05])).unwrap();
    assert_eq!(&g.value(h).data()[..3], &[0.2, 0.9, 0.05]);
    assert!(g.value(h).data()[3..].iter().all(|&v| v == 0.0));
}

#[test]
fn fresh_layer_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let layer = AttentionLayer::new(&mut store, "l", 16, 4, 32, &mut rng).unwrap();
    let x = Tensor::matrix(7, 16, (0..112).map(|_| rng.gen_range(-2.0..2.0)).collect());
    let mut g = Graph::new();
    let h = g.constant(x.clone());
    let out = layer.forward(&mut g, &store, h).unwrap();
    assert_eq!(g.value(out), &x);
    assert!(AttentionLayer::new(&mut store, "bad", 16, 3, 32, &mut rng).is_err());
}

#[test]
fn layer_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let layer = AttentionLayer::new(&mut store, "l", 16, 4, 32, &mut rng).unwrap();
    wake_gates(&mut store, &mut rng);
    let n = 9;
    let x = Tensor::matrix(n, 16, (0..n * 16).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let perm = shuffled(n, &mut rng);
    let xp = Tensor::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>());
    let run = |t: Tensor| {
        let mut g = Graph::new();
        let h = g.constant(t);
        let o = layer.forward(&mut g, &store, h).unwrap();
        g.value(o).clone()
    };
    let (a, b) = (run(x), run(xp));
    for (r, &src) in perm.iter().enumerate() {
        for c in 0..16 {
            assert!((b.get(r, c) - a.get(src, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn layer_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::new();
        let layer = AttentionLayer::new(&mut store, "l", 16, 4, 16, &mut rng).unwrap();
        wake_gates(&mut store, &mut rng);
        let x = Tensor::matrix(6, 16, (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let err = grad_check_params(
            &store,
            |g, s| {
                let h = g.constant(x.clone());
                let o = layer.forward(g, s, h)?;
                let m = g.mean_rows(o)?;
                Ok(g.sum(m))
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn flat_init_is_mean_of_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [ProblemKind::Tsp, ProblemKind::Cvrp] {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&small(EncoderMode::Flat), kind, &mut store, "e", &mut rng).unwrap();
        let inst = random_instance(kind, 12, &mut rng);
        let mut g = Graph::new();
        let rep = enc.encode(&mut g, &store, &inst).unwrap();
        let raw = Tensor::matrix(12, kind.feature_width(), inst.node_features());
        let h0 = enc.embed_nodes(&mut g, &store, raw).unwrap();
        let mean = g.mean_rows(h0).unwrap();
        assert_eq!(g.value(rep), g.value(mean));
        let p = permuted(&inst, &shuffled(12, &mut rng));
        assert_eq!(enc.represent(&store, &p).unwrap().len(), 16);
    }
}

#[test]
fn flat_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&small(EncoderMode::Flat), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    let inst = random_instance(ProblemKind::Tsp, 15, &mut rng);
    let perm = shuffled(15, &mut rng);
    wake_gates(&mut store, &mut rng);
    let a = enc.represent(&store, &inst).unwrap();
    let b = enc.represent(&store, &permuted(&inst, &perm)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn default_output_lengths() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inst = random_instance(ProblemKind::Tsp, 10, &mut rng);
    let mut cfg = EncoderConfig::default();
    cfg.mode = EncoderMode::Flat;
    let mut store = ParamStore::new();
    let enc = Encoder::new(&cfg, ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    assert_eq!(enc.represent(&store, &inst).unwrap().len(), 128);
    cfg.mode = EncoderMode::Hierarchical;
    let mut store = ParamStore::new();
    let enc = Encoder::new(&cfg, ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    assert_eq!(enc.represent(&store, &inst).unwrap().len(), 256);
    assert_eq!(enc.output_dim(), 256);
}

#[test]
fn pooled_counts_follow_floor_rule() {
    assert_eq!(pooled_count(100, 0.8), 80);
    assert_eq!(pooled_count(80, 0.8), 64);
    assert_eq!(pooled_count(2, 0.8), 1);
    assert_eq!(pooled_count(1, 0.8), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&small(EncoderMode::Hierarchical), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    for n in [1usize, 2, 3, 7, 100, 151] {
        let raw = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.gen()).collect());
        let trace = enc.pooling_trace(&store, raw).unwrap();
        let mut prev = n;
        for kept in trace {
            assert_eq!(kept.len(), ((prev as f64 * 0.8).floor() as usize).max(1));
            prev = kept.len();
        }
    }
}

#[test]
fn equal_scores_keep_lowest_indices() {
    assert_eq!(top_nodes(&[0.5; 10], 8), (0..8).collect::<Vec<_>>());
    assert_eq!(top_nodes(&[0.1, 0.9, 0.5, 0.9], 2), vec![1, 3]);
    assert_eq!(top_nodes(&[0.1, 0.9, 0.5, 0.9], 3), vec![1, 2, 3]);
}

#[test]
fn hierarchical_handles_two_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&small(EncoderMode::Hierarchical), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    let inst = random_instance(ProblemKind::Tsp, 2, &mut rng);
    let rep = enc.represent(&store, &inst).unwrap();
    assert_eq!(rep.len(), 32);
    assert!(rep.iter().all(|v| v.is_finite()));
    let raw = Tensor::matrix(2, 2, inst.node_features());
    let trace = enc.pooling_trace(&store, raw).unwrap();
    assert_eq!(trace.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1]);
}

#[test]
fn hierarchical_sums_three_readouts() {
    // With all gates closed and the score map zeroed, each block's output is
    // the input shifted by tanh(0) = 0, so every readout is tanh(mean ‖ max)
    // of the kept rows of H⁰.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&small(EncoderMode::Hierarchical), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with("w_score") {
            *store.get_mut(id) = Tensor::zeros(16, 1);
        }
    }
    let n = 10;
    let inst = random_instance(ProblemKind::Tsp, n, &mut rng);
    let w = store.get(enc.embed_param()).clone();
    let h0: Vec<Vec<f64>> = inst
        .coords
        .iter()
        .map(|c| (0..16).map(|j| c[0] * w.get(0, j) + c[1] * w.get(1, j)).collect())
        .collect();
    let read = |rows: &[Vec<f64>]| -> Vec<f64> {
        let mean: Vec<f64> = (0..16).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect();
        let max: Vec<f64> = (0..16).map(|j| rows.iter().map(|r| r[j]).fold(f64::MIN, f64::max)).collect();
        mean.into_iter().chain(max).map(f64::tanh).collect()
    };
    // equal scores keep the leading rows: 10 → 8 → 6
    let expect: Vec<f64> = (0..32)
        .map(|j| read(&h0)[j] + read(&h0[..8])[j] + read(&h0[..6])[j])
        .collect();
    let got = enc.represent(&store, &inst).unwrap();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn kind_mismatch_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&small(EncoderMode::Flat), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
    let inst = random_instance(ProblemKind::Cvrp, 5, &mut rng);
    assert!(matches!(enc.represent(&store, &inst), Err(EncoderError::Config(_))));
}

#[test]
fn encoders_match_finite_differences() {
    for (seed, mode, kind) in [
        (0u64, EncoderMode::Flat, ProblemKind::Tsp),
        (1, EncoderMode::Hierarchical, ProblemKind::Tsp),
        (2, EncoderMode::Hierarchical, ProblemKind::Cvrp),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut store = ParamStore::new();
        let mut cfg = small(mode);
        cfg.ff_hidden = 16;
        let enc = Encoder::new(&cfg, kind, &mut store, "e", &mut rng).unwrap();
        wake_gates(&mut store, &mut rng);
        let inst = random_instance(kind, 8, &mut rng);
        let err = grad_check_params(
            &store,
            |g, s| {
                let r = enc.encode(g, s, &inst).map_err(|e| match e {
                    EncoderError::Autodiff(a) => a,
                    other => panic!("{other}"),
                })?;
                Ok(g.sum(r))
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{mode:?} {kind:?}: {err}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    Encoder::new(&small(EncoderMode::Hierarchical), ProblemKind::Cvrp, &mut store, "e", &mut rng).unwrap();
    wake_gates(&mut store, &mut rng);
    let meta = serde_json::to_value(small(EncoderMode::Hierarchical)).unwrap();
    let ck = Checkpoint::from_store(meta, vec!["a".into(), "b".into()], &store);
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), bytes);

    let mut fresh = ParamStore::new();
    Encoder::new(&small(EncoderMode::Hierarchical), ProblemKind::Cvrp, &mut fresh, "e", &mut rng).unwrap();
    back.load_into(&mut fresh).unwrap();
    assert_eq!(fresh.flatten(), store.flatten());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);

    let mut other = ParamStore::new();
    Encoder::new(&small(EncoderMode::Flat), ProblemKind::Cvrp, &mut other, "e", &mut rng).unwrap();
    assert!(matches!(back.load_into(&mut other), Err(CheckpointError::Mismatch(_))));
}

#[test]
fn checkpoint_rejects_damage() {
    let mut store = ParamStore::new();
    store.add("w", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
    let good = Checkpoint::from_store(serde_json::json!({}), vec![], &store).to_bytes();

    let mut b = good.clone();
    b[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::Magic)));
    let mut b = good.clone();
    b[8] = 9;
    assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::Version(9))));
    assert!(matches!(Checkpoint::from_bytes(&good[..5]), Err(CheckpointError::Truncated(_))));
    assert!(matches!(Checkpoint::from_bytes(&good[..good.len() - 3]), Err(CheckpointError::BodyLength { .. })));
    let mut b = good.clone();
    b[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::Truncated("header"))));
    let mut b = good.clone();
    let n = b.len();
    b[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::NonFinite(_))));
    assert!(matches!(Checkpoint::load(Path::new("/nonexistent/x")), Err(CheckpointError::Io { .. })));
}

use std::path::Path;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pooled_count_in_range(n in 1usize..=500) {
        let k = pooled_count(n, 0.8);
        prop_assert!(k >= 1 && k <= n);
        prop_assert_eq!(k, std::cmp::max(1, (4 * n) / 5));
    }

    #[test]
    fn checkpoint_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = Checkpoint::from_bytes(&bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hierarchical_permutation_invariant(seed in 0u64..1000, n in 3usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&small(EncoderMode::Hierarchical), ProblemKind::Tsp, &mut store, "e", &mut rng).unwrap();
        wake_gates(&mut store, &mut rng);
        let inst = random_instance(ProblemKind::Tsp, n, &mut rng);
        let perm = shuffled(n, &mut rng);
        let a = enc.represent(&store, &inst).unwrap();
        let b = enc.represent(&store, &permuted(&inst, &perm)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }
}


