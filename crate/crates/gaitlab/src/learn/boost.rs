//! Second-order boosting of shallow trees on the logistic loss.

use super::tree::{midpoint_thresholds, Node, Tree};
use super::{sigmoid, ModelState};
use crate::telemetry::Label;

/// Newton boosting: each round fits a depth-limited tree to the gradient
/// `g = p - y` and hessian `h = p(1-p)` of the logistic loss, with leaf
/// weight `-G/(H+lambda)`. Shrinkage is folded into the stored leaf values,
/// so the model margin is just the sum of tree outputs. Deterministic; no
/// sampling anywhere.
pub fn fit(
    x: &[Vec<f64>],
    y: &[Label],
    n_rounds: usize,
    max_depth: usize,
    shrinkage: f64,
    l2_leaf_lambda: f64,
) -> ModelState {
    let n = x.len();
    let y01: Vec<f64> = y.iter().map(|l| l.as_f64()).collect();
    let mut margin = vec![0.0; n];
    let mut trees = Vec::with_capacity(n_rounds);
    for _ in 0..n_rounds {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y01[i];
            hess[i] = p * (1.0 - p);
        }
        let mut grower = Grower {
            x,
            grad: &grad,
            hess: &hess,
            lambda: l2_leaf_lambda,
            max_depth,
            shrinkage,
            nodes: Vec::new(),
        };
        grower.grow((0..n).collect(), 0);
        let tree = Tree { nodes: grower.nodes };
        for (m, row) in margin.iter_mut().zip(x) {
            *m += tree.eval(row);
        }
        trees.push(tree);
    }
    ModelState::Boost { trees }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    max_depth: usize,
    shrinkage: f64,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        if depth >= self.max_depth || rows.len() < 2 {
            return self.push_leaf(g, h);
        }
        match self.best_split(&rows, g, h) {
            None => self.push_leaf(g, h),
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&r| self.x[r][feature] <= threshold);
                let at = self.nodes.len();
                self.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
                let left = self.grow(left_rows, depth + 1);
                let right = self.grow(right_rows, depth + 1);
                let Node::Split { left: l, right: r, .. } = &mut self.nodes[at] else {
                    unreachable!()
                };
                *l = left;
                *r = right;
                at
            }
        }
    }

    fn push_leaf(&mut self, g: f64, h: f64) -> usize {
        let denom = h + self.lambda;
        let weight = if denom > 0.0 { -g / denom } else { 0.0 };
        self.nodes.push(Node::Leaf { value: self.shrinkage * weight });
        self.nodes.len() - 1
    }

    /// Highest positive Newton gain over all features and midpoints.
    fn best_split(&self, rows: &[usize], g_total: f64, h_total: f64) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let parent_score = g_total * g_total / (h_total + self.lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in 0..d {
            for threshold in midpoint_thresholds(self.x, rows, feature) {
                let mut gl = 0.0;
                let mut hl = 0.0;
                for &r in rows {
                    if self.x[r][feature] <= threshold {
                        gl += self.grad[r];
                        hl += self.hess[r];
                    }
                }
                let gr = g_total - gl;
                let hr = h_total - hl;
                let gain = 0.5
                    * (gl * gl / (hl + self.lambda) + gr * gr / (hr + self.lambda) - parent_score);
                if gain <= 0.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, ..)) => gain > b,
                };
                if better {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{separable, standardized};
    use super::super::{fit as fit_model, ModelSpec, ModelState};
    use super::*;

    /// Mean logistic loss of raw margins against 0/1 labels.
    fn log_loss(margins: &[f64], y: &[Label]) -> f64 {
        margins
            .iter()
            .zip(y)
            .map(|(&z, l)| {
                let soft = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                soft - l.as_f64() * z
            })
            .sum::<f64>()
            / margins.len() as f64
    }

    #[test]
    fn training_log_loss_never_increases_per_round() {
        let raw = separable(12);
        let ds = standardized(&raw);
        let y = ds.y.as_ref().unwrap();
        let state = fit(&ds.x, y, 30, 2, 0.3, 1.0);
        let ModelState::Boost { trees } = &state else { panic!() };

        let mut margins = vec![0.0; ds.n()];
        let mut last = log_loss(&margins, y);
        for tree in trees {
            for (m, row) in margins.iter_mut().zip(&ds.x) {
                *m += tree.eval(row);
            }
            let loss = log_loss(&margins, y);
            assert!(loss <= last + 1e-12, "round raised loss {last} -> {loss}");
            last = loss;
        }
        assert!(last < 0.2, "final training loss {last}");
    }

    #[test]
    fn trees_respect_depth_limit() {
        let raw = separable(10);
        let ds = standardized(&raw);
        let y = ds.y.as_ref().unwrap();
        let ModelState::Boost { trees } = fit(&ds.x, y, 10, 2, 0.3, 1.0) else { panic!() };
        for tree in &trees {
            assert!(tree.depth() <= 2);
        }
    }

    #[test]
    fn deterministic_without_seed() {
        let raw = separable(8);
        let ds = standardized(&raw);
        let a = fit_model(&ModelSpec::default_boosted_trees(), &ds).unwrap();
        let b = fit_model(&ModelSpec::default_boosted_trees(), &ds).unwrap();
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn pure_noise_stays_near_prior() {
        // constant features give no legal split: every tree is a single
        // leaf driven toward the class balance
        let x = vec![vec![1.0]; 10];
        let y: Vec<Label> =
            (0..10).map(|i| if i < 5 { Label::Pd } else { Label::Control }).collect();
        let ModelState::Boost { trees } = fit(&x, &y, 20, 2, 0.3, 1.0) else { panic!() };
        let margin: f64 = trees.iter().map(|t| t.eval(&[1.0])).sum();
        // balanced labels, so the additive model stays at the 0 margin
        assert!(margin.abs() < 1e-9);
    }

    #[test]
    fn shrinkage_scales_first_leaf() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![Label::Control, Label::Pd];
        for &(eta, lambda) in &[(0.3, 1.0), (1.0, 2.0)] {
            let ModelState::Boost { trees } = fit(&x, &y, 1, 2, eta, lambda) else { panic!() };
            // first round: p = 0.5, g = +-0.5, h = 0.25 per row, so each
            // leaf holds eta * 0.5 / (0.25 + lambda) with the label's sign
            let expect = eta * 0.5 / (0.25 + lambda);
            let got = trees[0].eval(&[1.0]);
            assert!((got - expect).abs() < 1e-12, "leaf {got}, expected {expect}");
            assert!((trees[0].eval(&[0.0]) + expect).abs() < 1e-12);
        }
    }
}
