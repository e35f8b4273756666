//! Linear soft-margin SVM fit by epoch-shuffled subgradient descent.

use super::ModelState;
use crate::telemetry::Label;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimizes mean hinge loss + `|w|^2 / (2C)` with step `1/(lambda t)` where
/// `lambda = 1/C`. The bias is driven by the hinge subgradient only, never
/// shrunk. Deterministic per seed.
pub fn fit(x: &[Vec<f64>], y: &[Label], c: f64, epochs: usize, seed: u64) -> ModelState {
    let d = x.first().map_or(0, Vec::len);
    let lambda = 1.0 / c;
    let signs: Vec<f64> = y.iter().map(|l| if *l == Label::Pd { 1.0 } else { -1.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut t = 1usize;
    let mut order: Vec<usize> = (0..x.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let step = 1.0 / (lambda * t as f64);
            let margin = signs[i]
                * (weights.iter().zip(&x[i]).map(|(w, v)| w * v).sum::<f64>() + bias);
            let shrink = 1.0 - step * lambda;
            if margin < 1.0 {
                for (w, v) in weights.iter_mut().zip(&x[i]) {
                    *w = *w * shrink + step * signs[i] * v;
                }
                bias += step * signs[i];
            } else {
                for w in weights.iter_mut() {
                    *w *= shrink;
                }
            }
            t += 1;
        }
    }
    ModelState::Linear { weights, bias }
}
