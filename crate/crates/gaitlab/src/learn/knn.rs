//! k-nearest-neighbour voting.

use super::{Metric, Weighting};
use crate::telemetry::Label;

/// Vote over the k nearest training rows. Neighbour order is (distance, row
/// index), so equal distances resolve deterministically. An exactly tied
/// vote goes to the single nearest neighbour's label.
pub fn predict(
    train_x: &[Vec<f64>],
    train_y: &[Label],
    query: &[f64],
    k: usize,
    metric: Metric,
    weighting: Weighting,
) -> (Label, f64) {
    let mut order: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, row)| (metric.distance(row, query), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut pd_weight = 0.0;
    let mut control_weight = 0.0;
    for &(dist, idx) in order.iter().take(k) {
        let w = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / dist.max(1e-12),
        };
        match train_y[idx] {
            Label::Pd => pd_weight += w,
            Label::Control => control_weight += w,
        }
    }
    let score = pd_weight / (pd_weight + control_weight);
    let label = if pd_weight > control_weight {
        Label::Pd
    } else if pd_weight < control_weight {
        Label::Control
    } else {
        train_y[order[0].1]
    };
    (label, score)
}
