use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::AutodiffError;

/// Denominator floor used by [`grad_check`].
pub const GRAD_FLOOR: f64 = 1e-5;

/// Largest relative disagreement between an analytic gradient and central
/// differences, with denominator `max(GRAD_FLOOR, |analytic| + |numeric|)`.
///
/// The floor sits above the ~1e-10 to 1e-9 absolute noise of a central difference at
/// `h = 1e-5`, so near-zero gradients are compared absolutely.
///
/// `f` returns the value and the analytic gradient at a point.
pub fn grad_check<F>(mut f: F, point: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(point);
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x).0;
        x[i] = orig - h;
        let down = f(&x).0;
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(err);
    }
    worst
}

/// [`grad_check`] over every scalar in `store`, where `build` records a
/// scalar loss on a fresh graph.
pub fn grad_check_params<B>(store: &ParamStore, build: B, h: f64) -> Result<f64, AutodiffError>
where
    B: Fn(&mut Graph, &ParamStore) -> Result<Var, AutodiffError>,
{
    let mut work = store.clone();
    // Surface build errors before the numeric sweep.
    {
        let mut g = Graph::new();
        let loss = build(&mut g, &work)?;
        g.backward(loss)?;
    }
    Ok(grad_check(
        |p| {
            work.load_flat(p);
            let mut g = Graph::new();
            let loss = build(&mut g, &work).expect("validated above");
            g.backward(loss).expect("validated above");
            let value = g.value(loss).item();
            (value, g.param_grads(&work).flatten())
        },
        &store.flatten(),
        h,
    ))
}
