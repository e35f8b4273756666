//! Labeled feature table with standardization and stratified splitting.
//!
//! Rows carry stable `row_ids` from the originally loaded table, so anything
//! fitted on a subset (a scaler, a feature ranking) can prove which rows it
//! saw. Downstream cross-validation uses that provenance to assert that no
//! test row ever leaks into fitting.

use crate::telemetry::Label;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("column {0:?} missing or out of place")]
    SchemaMismatch(String),
    #[error("unparseable value at line {line}, column {column:?}")]
    BadValue { line: usize, column: String },
    #[error("no rows survive cleaning")]
    EmptyAfterCleaning,
    #[error("operation needs both classes, found one")]
    SingleClass,
    #[error("operation needs labels")]
    Unlabeled,
    #[error("test fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("scaler fitted on {expected} columns, dataset has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Per-column standardization statistics plus fit provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    /// Population standard deviations; exactly 0 marks a constant column,
    /// which maps to all-zeros on apply.
    pub stds: Vec<f64>,
    /// `row_ids` of every row the statistics were computed from.
    pub fit_rows: Vec<usize>,
}

impl Scaler {
    fn transform(&self, value: f64, col: usize) -> f64 {
        if self.stds[col] > 0.0 {
            (value - self.means[col]) / self.stds[col]
        } else {
            0.0
        }
    }
}

/// A feature matrix with optional labels and row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub subject_ids: Vec<String>,
    /// Row-major n x d matrix; every value finite.
    pub x: Vec<Vec<f64>>,
    pub y: Option<Vec<Label>>,
    /// Stable identity of each row in the originally loaded table.
    pub row_ids: Vec<usize>,
    /// Set when this dataset's values are standardized.
    pub scaler: Option<Scaler>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Result<&[Label], DatasetError> {
        self.y.as_deref().ok_or(DatasetError::Unlabeled)
    }

    /// Count rows per class as (control, pd).
    pub fn class_counts(&self) -> Result<(usize, usize), DatasetError> {
        let y = self.labels()?;
        let pd = y.iter().filter(|l| **l == Label::Pd).count();
        Ok((y.len() - pd, pd))
    }

    /// New dataset holding the given row positions, provenance intact.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            subject_ids: rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: self.y.as_ref().map(|y| rows.iter().map(|&i| y[i]).collect()),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
            scaler: self.scaler.clone(),
        }
    }

    /// New dataset holding the given column positions, in the given order.
    pub fn subset_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            subject_ids: self.subject_ids.clone(),
            x: self.x.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect(),
            y: self.y.clone(),
            row_ids: self.row_ids.clone(),
            scaler: None, // column stats no longer line up
        }
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.x.iter().map(|row| row[col]).collect()
    }
}

/// Parse a wide feature table: `subject_id[,label],<feature columns...>`.
///
/// Rows containing an unparseable, missing, or non-finite value are dropped;
/// the second return value counts them. A label column where every row is
/// `?` yields an unlabeled dataset; a mix of `?` and real labels drops the
/// `?` rows as incomplete. Lines starting with `#` (tool provenance
/// headers) are ignored.
pub fn load_table(text: &str) -> Result<(Dataset, usize), DatasetError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = lines.next().ok_or(DatasetError::EmptyAfterCleaning)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first().copied() != Some("subject_id") {
        return Err(DatasetError::SchemaMismatch("subject_id".into()));
    }
    let has_label = cols.get(1).copied() == Some("label");
    let first_feature = if has_label { 2 } else { 1 };
    let feature_names: Vec<String> = cols[first_feature..].iter().map(|s| s.to_string()).collect();
    if feature_names.is_empty() {
        return Err(DatasetError::SchemaMismatch("<feature columns>".into()));
    }

    let mut subject_ids = Vec::new();
    let mut x: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<Option<Label>> = Vec::new();
    let mut dropped = 0usize;
    for (_lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            dropped += 1;
            continue;
        }
        let label = if has_label {
            match fields[1] {
                "?" => None,
                "0" => Some(Label::Control),
                "1" => Some(Label::Pd),
                _ => {
                    dropped += 1;
                    continue;
                }
            }
        } else {
            None
        };
        let mut row = Vec::with_capacity(feature_names.len());
        let mut ok = true;
        for f in &fields[first_feature..] {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            dropped += 1;
            continue;
        }
        subject_ids.push(fields[0].to_string());
        raw_labels.push(label);
        x.push(row);
    }

    // resolve the label policy over surviving rows
    let any_labeled = raw_labels.iter().any(Option::is_some);
    let y = if has_label && any_labeled {
        // drop rows that lack a label while others have one
        let keep: Vec<usize> =
            (0..x.len()).filter(|&i| raw_labels[i].is_some()).collect();
        dropped += x.len() - keep.len();
        subject_ids = keep.iter().map(|&i| subject_ids[i].clone()).collect();
        x = keep.iter().map(|&i| x[i].clone()).collect();
        Some(keep.iter().map(|&i| raw_labels[i].unwrap()).collect())
    } else {
        None
    };

    if x.is_empty() {
        return Err(DatasetError::EmptyAfterCleaning);
    }
    let row_ids = (0..x.len()).collect();
    Ok((
        Dataset { feature_names, subject_ids, x, y, row_ids, scaler: None },
        dropped,
    ))
}

/// Render the table back to CSV in the exact `load_table` schema. The label
/// column appears whenever labels exist.
pub fn write_table(ds: &Dataset) -> String {
    use std::fmt::Write;
    let mut out = String::from("subject_id");
    if ds.y.is_some() {
        out.push_str(",label");
    }
    for name in &ds.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..ds.n() {
        out.push_str(&ds.subject_ids[i]);
        if let Some(y) = &ds.y {
            write!(out, ",{}", y[i].as_u8()).unwrap();
        }
        for v in &ds.x[i] {
            write!(out, ",{v:e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Fit per-column statistics on `ds` and return its standardized copy plus
/// the scaler. Each output column has mean 0 and population std 1, except
/// constant columns, which become all zeros.
pub fn standardize(ds: &Dataset) -> (Dataset, Scaler) {
    let n = ds.n() as f64;
    let d = ds.d();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for c in 0..d {
        let mut sum = 0.0;
        for row in &ds.x {
            sum += row[c];
        }
        means[c] = sum / n;
        let mut ss = 0.0;
        for row in &ds.x {
            let dev = row[c] - means[c];
            ss += dev * dev;
        }
        stds[c] = (ss / n).sqrt();
    }
    let scaler = Scaler {
        feature_names: ds.feature_names.clone(),
        means,
        stds,
        fit_rows: ds.row_ids.clone(),
    };
    let out = apply_scaler(&scaler, ds).expect("self-application cannot mismatch");
    (out, scaler)
}

/// Apply previously fitted statistics to any dataset with the same columns.
pub fn apply_scaler(scaler: &Scaler, ds: &Dataset) -> Result<Dataset, DatasetError> {
    if scaler.means.len() != ds.d() {
        return Err(DatasetError::DimensionMismatch { expected: scaler.means.len(), got: ds.d() });
    }
    let x = ds
        .x
        .iter()
        .map(|row| row.iter().enumerate().map(|(c, &v)| scaler.transform(v, c)).collect())
        .collect();
    Ok(Dataset { x, scaler: Some(scaler.clone()), ..ds.clone() })
}

/// Deterministic stratified split: per class, a seeded shuffle sends
/// `round(test_fraction * class_count)` rows to the test side.
pub fn stratified_split(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    let y = ds.labels()?;
    let (n_control, n_pd) = ds.class_counts()?;
    if n_control == 0 || n_pd == 0 {
        return Err(DatasetError::SingleClass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_rows = Vec::new();
    let mut train_rows = Vec::new();
    for class in [Label::Control, Label::Pd] {
        let mut rows: Vec<usize> = (0..ds.n()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        let n_test = (test_fraction * rows.len() as f64).round() as usize;
        let n_test = n_test.clamp(1, rows.len() - 1);
        test_rows.extend(rows.drain(..n_test));
        train_rows.extend(rows);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok((ds.subset_rows(&train_rows), ds.subset_rows(&test_rows)))
}
