//! Random forest of Gini-split trees on bootstrap samples.

use super::tree::{Node, Tree};
use super::ModelState;
use crate::telemetry::Label;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Grow `n_trees` trees, each on its own bootstrap resample with
/// `features_per_split` (default `ceil(sqrt(d))`) candidate features per
/// node. Per-tree seeds come from one master stream, so the fit is
/// bit-reproducible.
pub fn fit(
    x: &[Vec<f64>],
    y: &[Label],
    n_trees: usize,
    max_depth: usize,
    min_leaf: usize,
    features_per_split: Option<usize>,
    seed: u64,
) -> ModelState {
    let d = x.first().map_or(0, Vec::len);
    let m = features_per_split.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..n_trees).map(|_| master.gen()).collect();

    let trees = tree_seeds
        .into_iter()
        .map(|ts| {
            let mut rng = ChaCha8Rng::seed_from_u64(ts);
            let rows: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
            let mut grower = Grower { x, y, max_depth, min_leaf, m, rng, nodes: Vec::new() };
            grower.grow(rows, 0);
            Tree { nodes: grower.nodes }
        })
        .collect();
    ModelState::Forest { trees }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Label],
    max_depth: usize,
    min_leaf: usize,
    m: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// Append the subtree for `rows`, returning its root index.
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let pd = rows.iter().filter(|&&r| self.y[r] == Label::Pd).count();
        let pure = pd == 0 || pd == rows.len();
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf || pure {
            return self.push_leaf(pd, rows.len());
        }
        match self.best_split(&rows) {
            None => self.push_leaf(pd, rows.len()),
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

    fn push_leaf(&mut self, pd: usize, n: usize) -> usize {
        self.nodes.push(Node::Leaf { value: pd as f64 / n as f64 });
        self.nodes.len() - 1
    }

    /// Lowest weighted child Gini over a random feature subset; `None` when
    /// every candidate is constant or violates `min_leaf`.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        features.truncate(self.m);

        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in &features {
            // sweep sorted rows once, tracking class counts left of the cut
            let mut sorted: Vec<usize> = rows.to_vec();
            sorted.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let total_pd = rows.iter().filter(|&&r| self.y[r] == Label::Pd).count();
            let n = rows.len();
            let mut left_pd = 0usize;
            let mut left_n = 0usize;
            for cut in 0..n - 1 {
                let r = sorted[cut];
                left_n += 1;
                if self.y[r] == Label::Pd {
                    left_pd += 1;
                }
                let here = self.x[r][feature];
                let next = self.x[sorted[cut + 1]][feature];
                if here == next {
                    continue; // can't cut inside a tied run
                }
                if left_n < self.min_leaf || n - left_n < self.min_leaf {
                    continue;
                }
                let score = weighted_gini(left_pd, left_n, total_pd - left_pd, n - left_n);
                let threshold = here + (next - here) / 2.0;
                let better = match best {
                    None => true,
                    Some((s, ..)) => score < s,
                };
                if better {
                    best = Some((score, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn weighted_gini(left_pd: usize, left_n: usize, right_pd: usize, right_n: usize) -> f64 {
    let gini = |pd: usize, n: usize| {
        let p = pd as f64 / n as f64;
        2.0 * p * (1.0 - p)
    };
    let n = (left_n + right_n) as f64;
    (left_n as f64 * gini(left_pd, left_n) + right_n as f64 * gini(right_pd, right_n)) / n
}
