//! Stratified cross-validation, grid search, and holdout evaluation.
//!
//! The scaler, and optionally the feature ranking, are refit inside every
//! training fold; an audit trail counts row-provenance checks proving that
//! no test-fold row influenced any fit statistic. A mimic mode instead ranks
//! features once on the full table, reproducing the common (leaky) habit of
//! selecting before splitting, so both protocols can be reported side by
//! side.

use crate::dataset::{standardize, Dataset, DatasetError};
use crate::learn::{fit, LearnError, Model, ModelSpec, Metric, Weighting};
use crate::select::{rank_features, SelectError};
use crate::telemetry::Label;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("folds must be at least 2, got {0}")]
    BadFolds(usize),
    #[error("class {class} has {count} rows, fewer than {folds} folds")]
    ClassTooSmall { class: Label, count: usize, folds: usize },
    #[error("grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// Where feature selection happens relative to the fold split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Use every column as-is.
    None,
    /// Re-rank features inside each training fold (leakage-free).
    Honest { k: usize, bins: usize },
    /// Rank once on the full table before splitting (deliberately leaky,
    /// for comparison). The ranking is not leakage-audited in this mode.
    Mimic { k: usize, bins: usize },
}

impl SelectionMode {
    pub fn describe(&self) -> String {
        match self {
            SelectionMode::None => "none".into(),
            SelectionMode::Honest { k, bins } => format!("honest k={k} bins={bins}"),
            SelectionMode::Mimic { k, bins } => format!("mimic k={k} bins={bins}"),
        }
    }
}

/// Row-provenance bookkeeping: each check confirms one test row was absent
/// from one fitted statistic's fit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LeakageAudit {
    pub scaler_checks: usize,
    pub scaler_violations: usize,
    pub rank_checks: usize,
    pub rank_violations: usize,
}

impl LeakageAudit {
    pub fn checks(&self) -> usize {
        self.scaler_checks + self.rank_checks
    }

    pub fn violations(&self) -> usize {
        self.scaler_violations + self.rank_violations
    }

    fn record(&mut self, fit_rows: &[usize], test_rows: &[usize], is_rank: bool) {
        let overlap = test_rows.iter().filter(|r| fit_rows.contains(r)).count();
        if is_rank {
            self.rank_checks += test_rows.len();
            self.rank_violations += overlap;
        } else {
            self.scaler_checks += test_rows.len();
            self.scaler_violations += overlap;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_pos: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_neg + self.false_pos + self.false_neg + self.true_pos
    }

    pub fn accuracy_pct(&self) -> f64 {
        100.0 * (self.true_neg + self.true_pos) as f64 / self.total() as f64
    }

    /// (control recall, pd recall) in percent.
    pub fn recalls_pct(&self) -> (f64, f64) {
        let control = self.true_neg + self.false_pos;
        let pd = self.true_pos + self.false_neg;
        (
            if control == 0 { 0.0 } else { 100.0 * self.true_neg as f64 / control as f64 },
            if pd == 0 { 0.0 } else { 100.0 * self.true_pos as f64 / pd as f64 },
        )
    }
}

/// Outcome of a cross-validation or holdout run. All accuracy figures are
/// percentages. Wall time is informational and never serialized, so report
/// files stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub spec: ModelSpec,
    pub selection: String,
    pub seed: u64,
    pub folds: usize,
    pub fold_accuracies_pct: Vec<f64>,
    pub mean_accuracy_pct: f64,
    pub confusion: Confusion,
    pub recall_control_pct: f64,
    pub recall_pd_pct: f64,
    pub leakage: LeakageAudit,
    pub wall_time_s: f64,
}

impl EvalReport {
    /// `key,value` CSV, stable across identical runs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        let mut kv = |k: &str, v: String| writeln!(out, "{k},{v}").unwrap();
        kv("spec", self.spec.to_string());
        kv("selection", self.selection.clone());
        kv("seed", self.seed.to_string());
        kv("folds", self.folds.to_string());
        for (i, acc) in self.fold_accuracies_pct.iter().enumerate() {
            kv(&format!("fold_{}_accuracy_pct", i + 1), format!("{acc:.4}"));
        }
        kv("mean_accuracy_pct", format!("{:.4}", self.mean_accuracy_pct));
        kv("true_neg", self.confusion.true_neg.to_string());
        kv("false_pos", self.confusion.false_pos.to_string());
        kv("false_neg", self.confusion.false_neg.to_string());
        kv("true_pos", self.confusion.true_pos.to_string());
        kv("recall_control_pct", format!("{:.4}", self.recall_control_pct));
        kv("recall_pd_pct", format!("{:.4}", self.recall_pd_pct));
        kv("leakage_checks", self.leakage.checks().to_string());
        kv("leakage_violations", self.leakage.violations().to_string());
        out
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model:     {}", self.spec).unwrap();
        writeln!(out, "selection: {}", self.selection).unwrap();
        writeln!(out, "seed:      {}   folds: {}", self.seed, self.folds).unwrap();
        let folds: Vec<String> =
            self.fold_accuracies_pct.iter().map(|a| format!("{a:.1}")).collect();
        writeln!(out, "fold accuracy (%): {}", folds.join("  ")).unwrap();
        writeln!(out, "mean accuracy:     {:.2}%", self.mean_accuracy_pct).unwrap();
        writeln!(out).unwrap();
        let c = &self.confusion;
        writeln!(out, "                 predicted").unwrap();
        writeln!(out, "                 control      pd").unwrap();
        writeln!(out, "actual control   {:>7} {:>7}", c.true_neg, c.false_pos).unwrap();
        writeln!(out, "actual pd        {:>7} {:>7}", c.false_neg, c.true_pos).unwrap();
        writeln!(out).unwrap();
        writeln!(
            out,
            "recall: control {:.1}%  pd {:.1}%",
            self.recall_control_pct, self.recall_pd_pct
        )
        .unwrap();
        writeln!(
            out,
            "leakage audit: {} checks, {} violations",
            self.leakage.checks(),
            self.leakage.violations()
        )
        .unwrap();
        out
    }
}

/// Grid-search outcome: one entry per evaluated spec in grid order, plus the
/// winner under the tie-break rules.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub entries: Vec<(ModelSpec, f64)>,
    pub skipped: Vec<(ModelSpec, String)>,
    pub best_spec: ModelSpec,
    pub best_accuracy_pct: f64,
    pub selection: String,
    pub seed: u64,
    pub folds: usize,
    pub wall_time_s: f64,
}

impl TuneReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,spec,mean_accuracy_pct,status\n");
        for (i, (spec, acc)) in self.entries.iter().enumerate() {
            let status = if *spec == self.best_spec { "best" } else { "ok" };
            writeln!(out, "{},{spec},{acc:.4},{status}", i + 1).unwrap();
        }
        for (spec, reason) in &self.skipped {
            writeln!(out, ",{spec},,skipped: {reason}").unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.entries.iter().map(|(s, _)| s.to_string().len()).max().unwrap_or(4);
        let mut out = String::new();
        writeln!(out, "grid search: {} specs, {} folds, seed {}", self.entries.len(), self.folds, self.seed)
            .unwrap();
        writeln!(out, "selection: {}", self.selection).unwrap();
        for (spec, acc) in &self.entries {
            let mark = if *spec == self.best_spec { " <- best" } else { "" };
            writeln!(out, "{:<width$}  {acc:>7.2}%{mark}", spec.to_string()).unwrap();
        }
        for (spec, reason) in &self.skipped {
            writeln!(out, "{:<width$}  skipped: {reason}", spec.to_string()).unwrap();
        }
        out
    }
}

/// Deterministic stratified fold labels: per class, a seeded shuffle dealt
/// round-robin. A running offset carries across classes so total fold sizes
/// also differ by at most one.
pub fn fold_assignment(y: &[Label], folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; y.len()];
    let mut offset = 0usize;
    for class in [Label::Control, Label::Pd] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        for (i, row) in rows.iter().enumerate() {
            assignment[*row] = (offset + i) % folds;
        }
        offset = (offset + rows.len()) % folds;
    }
    assignment
}

fn check_cv_preconditions(ds: &Dataset, folds: usize) -> Result<(), EvalError> {
    if folds < 2 {
        return Err(EvalError::BadFolds(folds));
    }
    let (n_control, n_pd) = ds.class_counts()?;
    for (class, count) in [(Label::Control, n_control), (Label::Pd, n_pd)] {
        if count < folds {
            return Err(EvalError::ClassTooSmall { class, count, folds });
        }
    }
    Ok(())
}

/// Cross-validate using every feature column.
pub fn cross_validate(
    spec: &ModelSpec,
    ds: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    cross_validate_with(spec, ds, folds, seed, SelectionMode::None)
}

/// Cross-validate under the given selection protocol.
pub fn cross_validate_with(
    spec: &ModelSpec,
    ds: &Dataset,
    folds: usize,
    seed: u64,
    mode: SelectionMode,
) -> Result<EvalReport, EvalError> {
    let start = Instant::now();
    check_cv_preconditions(ds, folds)?;
    let y = ds.labels()?.to_vec();
    let assignment = fold_assignment(&y, folds, seed);

    // mimic mode fixes the column choice before any split
    let global_columns = match mode {
        SelectionMode::Mimic { k, bins } => {
            let ranked = rank_features(ds, k, bins)?;
            Some(ranked.selected_columns(ds))
        }
        _ => None,
    };

    let mut audit = LeakageAudit::default();
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut confusion =
        Confusion { true_neg: 0, false_pos: 0, false_neg: 0, true_pos: 0 };

    for f in 0..folds {
        let test_rows: Vec<usize> = (0..ds.n()).filter(|&i| assignment[i] == f).collect();
        let train_rows: Vec<usize> = (0..ds.n()).filter(|&i| assignment[i] != f).collect();
        let train = ds.subset_rows(&train_rows);
        let test = ds.subset_rows(&test_rows);

        let columns: Vec<usize> = match (&mode, &global_columns) {
            (SelectionMode::None, _) => (0..ds.d()).collect(),
            (SelectionMode::Honest { k, bins }, _) => {
                let ranked = rank_features(&train, *k, *bins)?;
                audit.record(&ranked.fit_rows, &test.row_ids, true);
                ranked.selected_columns(&train)
            }
            (SelectionMode::Mimic { .. }, Some(cols)) => cols.clone(),
            (SelectionMode::Mimic { .. }, None) => unreachable!(),
        };

        let train_sel = train.subset_columns(&columns);
        let test_sel = test.subset_columns(&columns);
        let (train_std, scaler) = standardize(&train_sel);
        audit.record(&scaler.fit_rows, &test_sel.row_ids, false);

        let model = fit(spec, &train_std)?;
        let mut correct = 0usize;
        for (row, want) in test_sel.x.iter().zip(test_sel.y.as_ref().unwrap()) {
            let (got, _) = model.predict_row(row)?;
            if got == *want {
                correct += 1;
            }
            match (*want, got) {
                (Label::Control, Label::Control) => confusion.true_neg += 1,
                (Label::Control, Label::Pd) => confusion.false_pos += 1,
                (Label::Pd, Label::Control) => confusion.false_neg += 1,
                (Label::Pd, Label::Pd) => confusion.true_pos += 1,
            }
        }
        fold_accuracies.push(100.0 * correct as f64 / test_rows.len() as f64);
    }

    let mean = fold_accuracies.iter().sum::<f64>() / folds as f64;
    let (recall_control, recall_pd) = confusion.recalls_pct();
    Ok(EvalReport {
        spec: spec.clone(),
        selection: mode.describe(),
        seed,
        folds,
        fold_accuracies_pct: fold_accuracies,
        mean_accuracy_pct: mean,
        confusion,
        recall_control_pct: recall_control,
        recall_pd_pct: recall_pd,
        leakage: audit,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// The stock KNN grid: k in 1,3,...,21 crossed with both metrics and both
/// weightings (44 specs).
pub fn default_knn_grid() -> Vec<ModelSpec> {
    let mut grid = Vec::with_capacity(44);
    for k in (1..=21).step_by(2) {
        for metric in [Metric::Euclidean, Metric::Manhattan] {
            for weighting in [Weighting::Uniform, Weighting::InverseDistance] {
                grid.push(ModelSpec::Knn { k, metric, weighting });
            }
        }
    }
    grid
}

/// Tie-break key: smaller k first, then the simpler metric and weighting,
/// then grid order. Non-KNN specs fall back to grid order alone.
fn tie_key(spec: &ModelSpec, index: usize) -> (usize, usize, usize, usize) {
    match spec {
        ModelSpec::Knn { k, metric, weighting } => (
            *k,
            match metric {
                Metric::Euclidean => 0,
                Metric::Manhattan => 1,
            },
            match weighting {
                Weighting::Uniform => 0,
                Weighting::InverseDistance => 1,
            },
            index,
        ),
        _ => (usize::MAX, usize::MAX, usize::MAX, index),
    }
}

/// Evaluate every spec on identical folds and pick the best mean accuracy.
/// Specs infeasible on these folds (k exceeding a fold's training size) are
/// reported as skipped rather than failing the search.
pub fn grid_search(
    grid: &[ModelSpec],
    ds: &Dataset,
    folds: usize,
    seed: u64,
    mode: SelectionMode,
) -> Result<TuneReport, EvalError> {
    let start = Instant::now();
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    check_cv_preconditions(ds, folds)?;

    let mut entries: Vec<(ModelSpec, f64)> = Vec::new();
    let mut skipped: Vec<(ModelSpec, String)> = Vec::new();
    let mut best: Option<(f64, (usize, usize, usize, usize), ModelSpec)> = None;
    for (index, spec) in grid.iter().enumerate() {
        // the fold assignment depends only on (labels, folds, seed), so
        // every spec sees identical folds
        match cross_validate_with(spec, ds, folds, seed, mode) {
            Ok(report) => {
                let acc = report.mean_accuracy_pct;
                let key = tie_key(spec, index);
                let better = match &best {
                    None => true,
                    Some((b_acc, b_key, _)) => {
                        acc > *b_acc || (acc == *b_acc && key < *b_key)
                    }
                };
                if better {
                    best = Some((acc, key, spec.clone()));
                }
                entries.push((spec.clone(), acc));
            }
            Err(EvalError::Learn(e @ LearnError::KTooLarge { .. })) => {
                skipped.push((spec.clone(), e.to_string()));
            }
            Err(other) => return Err(other),
        }
    }
    let (best_accuracy_pct, _, best_spec) = best.ok_or(EvalError::EmptyGrid)?;
    Ok(TuneReport {
        entries,
        skipped,
        best_spec,
        best_accuracy_pct,
        selection: mode.describe(),
        seed,
        folds,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Score a frozen model on a labeled holdout set. Columns are matched by
/// name; the model's own scaler is applied internally.
pub fn evaluate_holdout(model: &Model, test: &Dataset) -> Result<EvalReport, EvalError> {
    let start = Instant::now();
    let y = test.labels()?;
    let preds = model.predict_dataset(test)?;
    let mut confusion = Confusion { true_neg: 0, false_pos: 0, false_neg: 0, true_pos: 0 };
    for ((got, _), want) in preds.iter().zip(y) {
        match (*want, *got) {
            (Label::Control, Label::Control) => confusion.true_neg += 1,
            (Label::Control, Label::Pd) => confusion.false_pos += 1,
            (Label::Pd, Label::Control) => confusion.false_neg += 1,
            (Label::Pd, Label::Pd) => confusion.true_pos += 1,
        }
    }
    let accuracy = confusion.accuracy_pct();
    let (recall_control, recall_pd) = confusion.recalls_pct();
    Ok(EvalReport {
        spec: model.spec.clone(),
        selection: "holdout".into(),
        seed: 0,
        folds: 1,
        fold_accuracies_pct: vec![accuracy],
        mean_accuracy_pct: accuracy,
        confusion,
        recall_control_pct: recall_control,
        recall_pd_pct: recall_pd,
        leakage: LeakageAudit::default(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// One scored row of an unlabeled table.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedRow {
    pub row_id: usize,
    pub label: Label,
    pub score: f64,
}

/// Score every row of a (typically unlabeled) table.
pub fn predict_rows(model: &Model, ds: &Dataset) -> Result<Vec<PredictedRow>, LearnError> {
    let preds = model.predict_dataset(ds)?;
    Ok(ds
        .row_ids
        .iter()
        .zip(preds)
        .map(|(&row_id, (label, score))| PredictedRow { row_id, label, score })
        .collect())
}

/// `row_id,label,score` CSV.
pub fn predictions_to_csv(rows: &[PredictedRow]) -> String {
    let mut out = String::from("row_id,label,score\n");
    for r in rows {
        writeln!(out, "{},{},{:.6}", r.row_id, r.label.as_u8(), r.score).unwrap();
    }
    out
}
