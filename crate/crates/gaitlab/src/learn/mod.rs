//! Binary classifiers over standardized feature tables.
//!
//! Five model families share one `fit`/`predict` surface: k-nearest
//! neighbours (the primary screening model), logistic regression, a linear
//! soft-margin SVM, a random forest, and Newton-boosted shallow trees. All
//! randomized fits are bit-reproducible from their seed.

mod boost;
mod forest;
mod io;
mod knn;
mod logistic;
mod svm;
mod tree;

pub use io::{load_model, save_model, ModelIoError};
pub use logistic::loss_and_grad;
pub use tree::{Node, Tree};

use crate::dataset::{Dataset, Scaler};
use crate::telemetry::Label;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("training set has no labels")]
    Unlabeled,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("k={k} exceeds training size {n_train}")]
    KTooLarge { k: usize, n_train: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    pub fn from_str(s: &str) -> Option<Metric> {
        match s {
            "euclidean" => Some(Metric::Euclidean),
            "manhattan" => Some(Metric::Manhattan),
            _ => None,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::InverseDistance => "inverse_distance",
        }
    }

    pub fn from_str(s: &str) -> Option<Weighting> {
        match s {
            "uniform" => Some(Weighting::Uniform),
            "inverse_distance" => Some(Weighting::InverseDistance),
            _ => None,
        }
    }
}

/// A model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Knn { k: usize, metric: Metric, weighting: Weighting },
    Logistic { learning_rate: f64, l2_lambda: f64, max_iters: usize, tol: f64 },
    LinearSvm { c: f64, epochs: usize, seed: u64 },
    RandomForest {
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        /// Features sampled per split; `None` means `ceil(sqrt(d))` at fit.
        features_per_split: Option<usize>,
        seed: u64,
    },
    BoostedTrees { n_rounds: usize, max_depth: usize, shrinkage: f64, l2_leaf_lambda: f64 },
}

impl ModelSpec {
    pub fn default_knn() -> ModelSpec {
        ModelSpec::Knn { k: 5, metric: Metric::Euclidean, weighting: Weighting::Uniform }
    }

    pub fn default_logistic() -> ModelSpec {
        ModelSpec::Logistic { learning_rate: 0.1, l2_lambda: 1e-4, max_iters: 500, tol: 1e-6 }
    }

    pub fn default_linear_svm() -> ModelSpec {
        ModelSpec::LinearSvm { c: 1.0, epochs: 50, seed: 0 }
    }

    pub fn default_random_forest() -> ModelSpec {
        ModelSpec::RandomForest {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }

    pub fn default_boosted_trees() -> ModelSpec {
        ModelSpec::BoostedTrees { n_rounds: 50, max_depth: 2, shrinkage: 0.3, l2_leaf_lambda: 1.0 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::Logistic { .. } => "logistic",
            ModelSpec::LinearSvm { .. } => "linear_svm",
            ModelSpec::RandomForest { .. } => "random_forest",
            ModelSpec::BoostedTrees { .. } => "boosted_trees",
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: String| Err(LearnError::BadSpec(msg));
        match *self {
            ModelSpec::Knn { k, .. } => {
                if k == 0 {
                    return bad("k must be at least 1".into());
                }
                if k % 2 == 0 {
                    return bad(format!("k must be odd, got {k}"));
                }
            }
            ModelSpec::Logistic { learning_rate, l2_lambda, max_iters, tol } => {
                if !(learning_rate > 0.0) {
                    return bad(format!("learning_rate must be positive, got {learning_rate}"));
                }
                if !(l2_lambda >= 0.0) {
                    return bad(format!("l2_lambda must be non-negative, got {l2_lambda}"));
                }
                if max_iters == 0 {
                    return bad("max_iters must be at least 1".into());
                }
                if !(tol >= 0.0) {
                    return bad(format!("tol must be non-negative, got {tol}"));
                }
            }
            ModelSpec::LinearSvm { c, epochs, .. } => {
                if !(c > 0.0) {
                    return bad(format!("c must be positive, got {c}"));
                }
                if epochs == 0 {
                    return bad("epochs must be at least 1".into());
                }
            }
            ModelSpec::RandomForest { n_trees, max_depth, min_leaf, features_per_split, .. } => {
                if n_trees == 0 || max_depth == 0 || min_leaf == 0 {
                    return bad("n_trees, max_depth, and min_leaf must be positive".into());
                }
                if features_per_split == Some(0) {
                    return bad("features_per_split must be at least 1".into());
                }
            }
            ModelSpec::BoostedTrees { n_rounds, max_depth, shrinkage, l2_leaf_lambda } => {
                if n_rounds == 0 || max_depth == 0 {
                    return bad("n_rounds and max_depth must be positive".into());
                }
                if !(shrinkage > 0.0 && shrinkage <= 1.0) {
                    return bad(format!("shrinkage must be in (0, 1], got {shrinkage}"));
                }
                if !(l2_leaf_lambda >= 0.0) {
                    return bad(format!("l2_leaf_lambda must be non-negative, got {l2_leaf_lambda}"));
                }
            }
        }
        Ok(())
    }

    /// Hyperparameters as key=value pairs (kind excluded).
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        match self {
            ModelSpec::Knn { k, metric, weighting } => vec![
                ("k", k.to_string()),
                ("metric", metric.as_str().to_string()),
                ("weighting", weighting.as_str().to_string()),
            ],
            ModelSpec::Logistic { learning_rate, l2_lambda, max_iters, tol } => vec![
                ("learning_rate", learning_rate.to_string()),
                ("l2_lambda", l2_lambda.to_string()),
                ("max_iters", max_iters.to_string()),
                ("tol", tol.to_string()),
            ],
            ModelSpec::LinearSvm { c, epochs, seed } => vec![
                ("c", c.to_string()),
                ("epochs", epochs.to_string()),
                ("seed", seed.to_string()),
            ],
            ModelSpec::RandomForest { n_trees, max_depth, min_leaf, features_per_split, seed } => {
                let mut kv = vec![
                    ("n_trees", n_trees.to_string()),
                    ("max_depth", max_depth.to_string()),
                    ("min_leaf", min_leaf.to_string()),
                    ("seed", seed.to_string()),
                ];
                if let Some(m) = features_per_split {
                    kv.push(("features_per_split", m.to_string()));
                }
                kv
            }
            ModelSpec::BoostedTrees { n_rounds, max_depth, shrinkage, l2_leaf_lambda } => vec![
                ("n_rounds", n_rounds.to_string()),
                ("max_depth", max_depth.to_string()),
                ("shrinkage", shrinkage.to_string()),
                ("l2_leaf_lambda", l2_leaf_lambda.to_string()),
            ],
        }
    }

    /// Rebuild a spec from its kind name and key=value pairs; unknown or
    /// missing keys are errors.
    pub fn from_kv(kind: &str, pairs: &[(String, String)]) -> Result<ModelSpec, LearnError> {
        let get = |key: &str| -> Result<&str, LearnError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| LearnError::BadSpec(format!("missing key {key} for {kind}")))
        };
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, LearnError> {
            value.parse().map_err(|_| LearnError::BadSpec(format!("bad value for {key}: {value:?}")))
        }
        let known: &[&str] = match kind {
            "knn" => &["k", "metric", "weighting"],
            "logistic" => &["learning_rate", "l2_lambda", "max_iters", "tol"],
            "linear_svm" => &["c", "epochs", "seed"],
            "random_forest" => &["n_trees", "max_depth", "min_leaf", "features_per_split", "seed"],
            "boosted_trees" => &["n_rounds", "max_depth", "shrinkage", "l2_leaf_lambda"],
            other => return Err(LearnError::BadSpec(format!("unknown model kind {other:?}"))),
        };
        for (k, _) in pairs {
            if !known.contains(&k.as_str()) {
                return Err(LearnError::BadSpec(format!("unknown key {k:?} for {kind}")));
            }
        }
        let spec = match kind {
            "knn" => ModelSpec::Knn {
                k: parse("k", get("k")?)?,
                metric: Metric::from_str(get("metric")?)
                    .ok_or_else(|| LearnError::BadSpec(format!("bad metric {:?}", get("metric").unwrap())))?,
                weighting: Weighting::from_str(get("weighting")?).ok_or_else(|| {
                    LearnError::BadSpec(format!("bad weighting {:?}", get("weighting").unwrap()))
                })?,
            },
            "logistic" => ModelSpec::Logistic {
                learning_rate: parse("learning_rate", get("learning_rate")?)?,
                l2_lambda: parse("l2_lambda", get("l2_lambda")?)?,
                max_iters: parse("max_iters", get("max_iters")?)?,
                tol: parse("tol", get("tol")?)?,
            },
            "linear_svm" => ModelSpec::LinearSvm {
                c: parse("c", get("c")?)?,
                epochs: parse("epochs", get("epochs")?)?,
                seed: parse("seed", get("seed")?)?,
            },
            "random_forest" => ModelSpec::RandomForest {
                n_trees: parse("n_trees", get("n_trees")?)?,
                max_depth: parse("max_depth", get("max_depth")?)?,
                min_leaf: parse("min_leaf", get("min_leaf")?)?,
                features_per_split: match pairs.iter().find(|(k, _)| k == "features_per_split") {
                    Some((_, v)) => Some(parse("features_per_split", v)?),
                    None => None,
                },
                seed: parse("seed", get("seed")?)?,
            },
            "boosted_trees" => ModelSpec::BoostedTrees {
                n_rounds: parse("n_rounds", get("n_rounds")?)?,
                max_depth: parse("max_depth", get("max_depth")?)?,
                shrinkage: parse("shrinkage", get("shrinkage")?)?,
                l2_leaf_lambda: parse("l2_leaf_lambda", get("l2_leaf_lambda")?)?,
            },
            _ => unreachable!(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind_name())?;
        for (k, v) in self.to_kv() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Fitted parameters, one variant per family. Logistic and the linear SVM
/// share the weight-vector form.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Knn { x: Vec<Vec<f64>>, y: Vec<Label> },
    Linear { weights: Vec<f64>, bias: f64 },
    Forest { trees: Vec<Tree> },
    /// Leaf values carry the shrinkage already; the score is
    /// `sigmoid(sum of tree outputs)`.
    Boost { trees: Vec<Tree> },
}

/// A fitted classifier bound to its feature list and scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    /// Input feature names, in the order rows must be given to `predict_row`.
    pub feature_names: Vec<String>,
    /// Standardization applied to raw rows before scoring, when present.
    pub scaler: Option<Scaler>,
    pub state: ModelState,
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_train(train: &Dataset) -> Result<&[Label], LearnError> {
    let y = train.y.as_deref().ok_or(LearnError::Unlabeled)?;
    let pd = y.iter().filter(|l| **l == Label::Pd).count();
    if pd == 0 || pd == y.len() {
        return Err(LearnError::SingleClass);
    }
    Ok(y)
}

/// Fit `spec` on a standardized, labeled training set.
///
/// The dataset's scaler (when set) travels with the model so raw rows can be
/// scored later.
pub fn fit(spec: &ModelSpec, train: &Dataset) -> Result<Model, LearnError> {
    spec.validate()?;
    let y = check_train(train)?;
    if let ModelSpec::Knn { k, .. } = *spec {
        if k > train.n() {
            return Err(LearnError::KTooLarge { k, n_train: train.n() });
        }
    }
    let state = match spec {
        ModelSpec::Knn { .. } => ModelState::Knn { x: train.x.clone(), y: y.to_vec() },
        ModelSpec::Logistic { learning_rate, l2_lambda, max_iters, tol } => {
            logistic::fit(&train.x, y, *learning_rate, *l2_lambda, *max_iters, *tol)
        }
        ModelSpec::LinearSvm { c, epochs, seed } => svm::fit(&train.x, y, *c, *epochs, *seed),
        ModelSpec::RandomForest { n_trees, max_depth, min_leaf, features_per_split, seed } => {
            forest::fit(&train.x, y, *n_trees, *max_depth, *min_leaf, *features_per_split, *seed)
        }
        ModelSpec::BoostedTrees { n_rounds, max_depth, shrinkage, l2_leaf_lambda } => {
            boost::fit(&train.x, y, *n_rounds, *max_depth, *shrinkage, *l2_leaf_lambda)
        }
    };
    Ok(Model {
        spec: spec.clone(),
        feature_names: train.feature_names.clone(),
        scaler: train.scaler.clone(),
        state,
    })
}

impl Model {
    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    /// Classify one raw feature row (model feature order). Standardization
    /// happens internally. Returns the label and the score in `[0, 1]`,
    /// read as the weight behind class 1.
    pub fn predict_row(&self, row: &[f64]) -> Result<(Label, f64), LearnError> {
        if row.len() != self.d() {
            return Err(LearnError::DimensionMismatch { expected: self.d(), got: row.len() });
        }
        let scaled: Vec<f64>;
        let x = match &self.scaler {
            Some(s) => {
                scaled = row
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| if s.stds[c] > 0.0 { (v - s.means[c]) / s.stds[c] } else { 0.0 })
                    .collect();
                &scaled[..]
            }
            None => row,
        };
        Ok(match (&self.spec, &self.state) {
            (ModelSpec::Knn { k, metric, weighting }, ModelState::Knn { x: tx, y: ty }) => {
                knn::predict(tx, ty, x, *k, *metric, *weighting)
            }
            (_, ModelState::Linear { weights, bias }) => {
                let z = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
                let score = sigmoid(z);
                (if score >= 0.5 { Label::Pd } else { Label::Control }, score)
            }
            (_, ModelState::Forest { trees }) => {
                let votes = trees.iter().filter(|t| t.eval(x) >= 0.5).count();
                let score = votes as f64 / trees.len() as f64;
                (if score >= 0.5 { Label::Pd } else { Label::Control }, score)
            }
            (_, ModelState::Boost { trees }) => {
                let margin: f64 = trees.iter().map(|t| t.eval(x)).sum();
                let score = sigmoid(margin);
                (if score >= 0.5 { Label::Pd } else { Label::Control }, score)
            }
            _ => unreachable!("state always matches spec kind"),
        })
    }

    /// Classify every row of a dataset whose columns match the model's
    /// feature list by name (any order, extras allowed).
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<(Label, f64)>, LearnError> {
        let cols: Vec<usize> = self
            .feature_names
            .iter()
            .map(|name| {
                ds.feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or(LearnError::DimensionMismatch { expected: self.d(), got: ds.d() })
            })
            .collect::<Result<_, _>>()?;
        ds.x
            .iter()
            .map(|row| {
                let projected: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
                self.predict_row(&projected)
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::dataset::load_table;

    /// Labeled table with a linear signal in f_a and noise in f_b.
    pub fn separable(n_per_class: usize) -> Dataset {
        let mut text = String::from("subject_id,label,f_a,f_b\n");
        for i in 0..n_per_class {
            let jitter = (i as f64 * 0.37) % 1.0;
            text.push_str(&format!("c{i},0,{},{}\n", -2.0 - jitter, (i % 5) as f64));
            text.push_str(&format!("p{i},1,{},{}\n", 2.0 + jitter, (i % 3) as f64));
        }
        load_table(&text).unwrap().0
    }

    pub fn standardized(ds: &Dataset) -> Dataset {
        crate::dataset::standardize(ds).0
    }
}
