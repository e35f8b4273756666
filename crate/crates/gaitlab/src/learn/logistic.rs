//! L2-regularized logistic regression by full-batch gradient descent.

use super::{sigmoid, ModelState};
use crate::telemetry::Label;

/// Mean log-loss plus `l2/2 * |w|^2` (bias unregularized), with its gradient
/// in `(d_w, d_b)`. Public so the gradient can be checked against finite
/// differences.
pub fn loss_and_grad(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[f64],
    l2_lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = weights.len();
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z = weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + bias;
        // log(1 + e^z) - y z, computed without overflow on either sign
        loss += if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() } - yi * z;
        let residual = sigmoid(z) - yi;
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += residual * v;
        }
        grad_b += residual;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    loss += l2_lambda / 2.0 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Gradient descent from zero weights until the gradient's max-norm drops
/// below `tol` or `max_iters` is reached.
pub fn fit(
    x: &[Vec<f64>],
    y: &[Label],
    learning_rate: f64,
    l2_lambda: f64,
    max_iters: usize,
    tol: f64,
) -> ModelState {
    let d = x.first().map_or(0, Vec::len);
    let y01: Vec<f64> = y.iter().map(|l| l.as_f64()).collect();
    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    for _ in 0..max_iters {
        let (_, grad_w, grad_b) = loss_and_grad(&weights, bias, x, &y01, l2_lambda);
        let inf_norm = grad_w.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
        if inf_norm < tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_b;
    }
    ModelState::Linear { weights, bias }
}
