use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect())
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let a = Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 7.0]]);
    let i = g.constant(Tensor::identity(2));
    let av = g.constant(a.clone());
    let out = g.matmul(i, av).unwrap();
    assert_eq!(g.value(out), &a);
}

#[test]
fn softmax_uniform_and_stable() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]));
    let s = g.row_softmax(z).unwrap();
    for v in g.value(s).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let big = g.constant(Tensor::from_rows(&[vec![1000.0, 0.0]]));
    let s = g.row_softmax(big).unwrap();
    // exact limit: e^{-1000} underflows to 0 in f64
    assert_eq!(g.value(s).data(), &[1.0, 0.0]);
}

#[test]
fn sum_gradient_is_ones() {
    let mut g = Graph::new();
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
    let x = g.param(&store, id);
    let loss = g.sum(x);
    g.backward(loss).unwrap();
    assert_eq!(g.param_grads(&store).get(id).data(), &[1.0; 4]);
}

#[test]
fn product_of_scalars() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::scalar(3.0));
    let y = g.constant(Tensor::scalar(-2.5));
    let loss = g.scalar_mul(x, y).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), -2.5);
    assert_eq!(g.grad(y).unwrap().item(), 3.0);
}

#[test]
fn unreachable_parameter_gets_zero() {
    let mut store = ParamStore::new();
    let used = store.add("used", Tensor::scalar(2.0));
    let unused = store.add("unused", Tensor::filled(2, 2, 5.0));
    let mut g = Graph::new();
    let u = g.param(&store, used);
    let _ = g.param(&store, unused);
    let loss = g.scale(u, 3.0);
    g.backward(loss).unwrap();
    let grads = g.param_grads(&store);
    assert_eq!(grads.get(used).item(), 3.0);
    assert_eq!(grads.get(unused).data(), &[0.0; 4]);
}

#[test]
fn repeated_backward_accumulates() {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::from_rows(&[vec![0.3, -0.7, 1.1]]));
    let mut g = Graph::new();
    let x = g.param(&store, id);
    let t = g.tanh(x);
    let loss = g.sum(t);
    g.backward(loss).unwrap();
    let once = g.param_grads(&store).flatten();
    g.backward(loss).unwrap();
    let twice = g.param_grads(&store).flatten();
    for (a, b) in once.iter().zip(&twice) {
        assert!((2.0 * a - b).abs() < 1e-15);
    }
}

#[test]
fn non_scalar_loss_rejected() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(2, 2));
    assert!(matches!(g.backward(x), Err(AutodiffError::NonScalarLoss(_))));
}

#[test]
fn shape_mismatch_names_kind_and_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(2, 3));
    let b = g.constant(Tensor::zeros(2, 3));
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    let col = g_col(&mut g);
    let err = g.add(a, col).unwrap_err();
    assert!(err.to_string().contains("add"));
}

fn g_col(g: &mut Graph) -> Var {
    g.constant(Tensor::zeros(2, 1))
}

type Builder = fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>;

/// Each primitive composed with a fixed random projection so the loss is a
/// generic scalar function of the primitive's output.
fn primitive_cases() -> Vec<(&'static str, Vec<(usize, usize)>, Builder)> {
    fn project(g: &mut Graph, v: Var) -> Result<Var, AutodiffError> {
        let t = g.value(v).clone();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = g.constant(random(t.rows(), t.cols(), &mut rng));
        let prod = g.transpose(w)?;
        let prod = g.matmul(v, prod)?;
        let s = g.tanh(prod);
        Ok(g.sum(s))
    }
    vec![
        ("matmul", vec![(3, 4), (4, 2)], |g, v| {
            let o = g.matmul(v[0], v[1])?;
            project(g, o)
        }),
        ("matmul-nt", vec![(3, 4), (2, 4)], |g, v| {
            let o = g.matmul_nt(v[0], v[1])?;
            project(g, o)
        }),
        ("add", vec![(3, 2), (3, 2)], |g, v| {
            let o = g.add(v[0], v[1])?;
            project(g, o)
        }),
        ("mul", vec![(3, 2), (3, 2)], |g, v| {
            let o = g.mul(v[0], v[1])?;
            project(g, o)
        }),
        ("scale", vec![(2, 3)], |g, v| {
            let o = g.scale(v[0], -1.7);
            project(g, o)
        }),
        ("scalar-mul", vec![(3, 3), (1, 1)], |g, v| {
            let o = g.scalar_mul(v[0], v[1])?;
            project(g, o)
        }),
        ("row-softmax", vec![(3, 4)], |g, v| {
            let o = g.row_softmax(v[0])?;
            project(g, o)
        }),
        ("tanh", vec![(2, 5)], |g, v| {
            let o = g.tanh(v[0]);
            project(g, o)
        }),
        ("relu", vec![(4, 3)], |g, v| {
            let o = g.relu(v[0]);
            project(g, o)
        }),
        ("concat-cols", vec![(3, 2), (3, 1)], |g, v| {
            let o = g.concat_cols(&[v[0], v[1]])?;
            project(g, o)
        }),
        ("concat-rows", vec![(1, 3), (2, 3)], |g, v| {
            let o = g.concat_rows(&[v[0], v[1]])?;
            project(g, o)
        }),
        ("slice-cols", vec![(3, 5)], |g, v| {
            let o = g.slice_cols(v[0], 1, 4)?;
            project(g, o)
        }),
        ("mean-rows", vec![(5, 3)], |g, v| {
            let o = g.mean_rows(v[0])?;
            project(g, o)
        }),
        ("max-cols", vec![(5, 3)], |g, v| {
            let o = g.max_cols(v[0])?;
            project(g, o)
        }),
        ("gather-rows", vec![(5, 2)], |g, v| {
            let o = g.gather_rows(v[0], &[4, 1, 1])?;
            project(g, o)
        }),
        ("broadcast-add-col", vec![(4, 3), (4, 1)], |g, v| {
            let o = g.broadcast_add_col(v[0], v[1])?;
            project(g, o)
        }),
        ("add-row", vec![(4, 3), (1, 3)], |g, v| {
            let o = g.add_row(v[0], v[1])?;
            project(g, o)
        }),
        ("transpose", vec![(2, 3)], |g, v| {
            let o = g.transpose(v[0])?;
            project(g, o)
        }),
        ("softmax-cross-entropy", vec![(1, 5)], |g, v| g.softmax_cross_entropy(v[0], 3)),
        ("plackett-luce-nll", vec![(1, 4)], |g, v| g.plackett_luce_nll(v[0], &[2, 0, 3, 1])),
    ]
}

#[test]
fn every_primitive_matches_finite_differences() {
    for (kind, shapes, build) in primitive_cases() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            let ids: Vec<ParamId> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| store.add(format!("in{i}"), random(r, c, &mut rng)))
                .collect();
            let err = grad_check_params(
                &store,
                |g, s| {
                    let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
                    build(g, &vars)
                },
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind} seed {seed}: rel err {err}");
        }
    }
}

#[test]
fn softmax_then_sum_of_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let id = store.add("x", random(3, 4, &mut rng));
    let err = grad_check_params(
        &store,
        |g, s| {
            let x = g.param(s, id);
            let p = g.row_softmax(x)?;
            let sq = g.mul(p, p)?;
            Ok(g.sum(sq))
        },
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        vals in proptest::collection::vec(-300.0f64..300.0, 1..40),
    ) {
        let cols = (vals.len() / rows).max(1);
        let mut data = vals.clone();
        data.resize(rows * cols, 0.0);
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(rows, cols, data));
        let s = g.row_softmax(x).unwrap();
        let out = g.value(s);
        for r in 0..rows {
            prop_assert!(out.row(r).iter().all(|v| *v >= 0.0));
            let total: f64 = out.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
