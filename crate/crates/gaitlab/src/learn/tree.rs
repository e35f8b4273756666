//! Flat binary decision trees shared by the forest and boosting learners.

/// Node in a flattened tree; children are indices into the node vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Binary tree stored as a vector, root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Tree {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    /// Walk the tree: `x[feature] <= threshold` goes left.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Candidate split thresholds for one feature over the given rows: midpoints
/// between consecutive distinct sorted values. Guarantees both children are
/// non-empty.
pub fn midpoint_thresholds(x: &[Vec<f64>], rows: &[usize], feature: usize) -> Vec<f64> {
    let mut values: Vec<f64> = rows.iter().map(|&r| x[r][feature]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
}
