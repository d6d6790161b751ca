//! Score-vector losses shared by the tape ops and the plain evaluators.

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `ln Σ exp(s_j)` over `idx`, shifted by the subset maximum.
fn log_sum_exp(scores: &[f64], idx: &[usize]) -> (f64, f64) {
    let mx = idx.iter().map(|&j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = idx.iter().map(|&j| (scores[j] - mx).exp()).sum();
    (mx, s.ln())
}

pub fn softmax_cross_entropy(scores: &[f64], target: usize) -> f64 {
    let all: Vec<usize> = (0..scores.len()).collect();
    let (mx, lse) = log_sum_exp(scores, &all);
    lse + (mx - scores[target])
}

pub fn plackett_luce_nll(scores: &[f64], order: &[usize]) -> f64 {
    (0..order.len())
        .map(|i| {
            let (mx, lse) = log_sum_exp(scores, &order[i..]);
            lse + (mx - scores[order[i]])
        })
        .sum()
}

pub fn plackett_luce_grad(scores: &[f64], order: &[usize]) -> Vec<f64> {
    let m = order.len();
    let suffix: Vec<f64> = (0..m)
        .map(|i| {
            let (mx, lse) = log_sum_exp(scores, &order[i..]);
            mx + lse
        })
        .collect();
    let mut grad = vec![0.0; scores.len()];
    for (j, &k) in order.iter().enumerate() {
        let p: f64 = suffix[..=j].iter().map(|l| (scores[k] - l).exp()).sum();
        grad[k] = p - 1.0;
    }
    grad
}
