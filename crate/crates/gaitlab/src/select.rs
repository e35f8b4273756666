//! Mutual-information feature ranking.
//!
//! Columns are discretized by equal-frequency binning, scored with a plug-in
//! MI estimate against the binary label (in bits), and ranked descending.
//! Rank-based bins make every score invariant to strictly monotone
//! transforms of a column.

use crate::dataset::Dataset;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("feature ranking needs labels")]
    Unlabeled,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("bin count {0} must be at least 2")]
    BadBins(usize),
}

/// Equal-frequency discretization by sorted rank.
///
/// Value ties share one bin: the bin of the run's first sorted position, so
/// equal inputs always map to equal codes. Codes lie in `[0, bins)`.
pub fn discretize(column: &[f64], bins: usize) -> Vec<usize> {
    let n = column.len();
    if n == 0 || bins < 2 {
        return vec![0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));

    let mut codes = vec![0usize; n];
    let mut run_start = 0usize;
    for pos in 0..n {
        if column[order[pos]].total_cmp(&column[order[run_start]]).is_ne() {
            run_start = pos;
        }
        codes[order[pos]] = run_start * bins / n;
    }
    codes
}

/// Plug-in mutual information between two code sequences, in bits.
///
/// The direct double sum over the joint table, skipping empty cells, clamped
/// at zero against negative rounding residue. Symmetric in its arguments.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "code sequences must align");
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let ka = a.iter().max().map_or(1, |m| m + 1);
    let kb = b.iter().max().map_or(1, |m| m + 1);

    let mut joint = vec![0usize; ka * kb];
    let mut ma = vec![0usize; ka];
    let mut mb = vec![0usize; kb];
    for (&ai, &bi) in a.iter().zip(b) {
        joint[ai * kb + bi] += 1;
        ma[ai] += 1;
        mb[bi] += 1;
    }

    let nf = n as f64;
    let mut mi = 0.0;
    for ai in 0..ka {
        for bi in 0..kb {
            let c = joint[ai * kb + bi];
            if c == 0 {
                continue;
            }
            let p_joint = c as f64 / nf;
            let p_a = ma[ai] as f64 / nf;
            let p_b = mb[bi] as f64 / nf;
            mi += p_joint * (p_joint / (p_a * p_b)).log2();
        }
    }
    mi.max(0.0)
}

/// Shannon entropy of a code sequence, in bits.
pub fn entropy_bits(codes: &[usize]) -> f64 {
    let n = codes.len();
    if n == 0 {
        return 0.0;
    }
    let k = codes.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for &c in codes {
        counts[c] += 1;
    }
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// MI ranking over a labeled dataset, descending, ties broken by column
/// order. Carries the fit rows so downstream validation can prove which rows
/// influenced the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeatures {
    /// (feature_name, mi_bits), best first.
    pub entries: Vec<(String, f64)>,
    pub k_selected: usize,
    pub bins: usize,
    /// `row_ids` of every row that contributed to the scores.
    pub fit_rows: Vec<usize>,
}

impl RankedFeatures {
    /// Names of the selected features, best first.
    pub fn selected(&self) -> Vec<&str> {
        self.entries[..self.k_selected].iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Column indices of the selected features in `ds`, best first.
    pub fn selected_columns(&self, ds: &Dataset) -> Vec<usize> {
        self.selected()
            .iter()
            .filter_map(|name| ds.feature_names.iter().position(|f| f == name))
            .collect()
    }

    /// `rank,feature,mi_bits,selected` CSV.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("rank,feature,mi_bits,selected\n");
        for (i, (name, mi)) in self.entries.iter().enumerate() {
            let sel = if i < self.k_selected { 1 } else { 0 };
            writeln!(out, "{},{name},{mi:.6},{sel}", i + 1).unwrap();
        }
        out
    }

    /// Horizontal-bar text chart of the scores.
    pub fn to_chart(&self) -> String {
        use std::fmt::Write;
        let width = self.entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let top = self.entries.first().map(|(_, mi)| *mi).unwrap_or(0.0).max(1e-12);
        let mut out = String::new();
        for (i, (name, mi)) in self.entries.iter().enumerate() {
            let bar_len = ((mi / top) * 40.0).round() as usize;
            let marker = if i < self.k_selected { '*' } else { ' ' };
            writeln!(
                out,
                "{marker} {name:<width$}  {mi:>7.4}  {}",
                "#".repeat(bar_len)
            )
            .unwrap();
        }
        out
    }
}

/// Score every column's MI with the label and select the top `k`.
pub fn rank_features(ds: &Dataset, k: usize, bins: usize) -> Result<RankedFeatures, SelectError> {
    let y = ds.y.as_deref().ok_or(SelectError::Unlabeled)?;
    if ds.n() < 2 {
        return Err(SelectError::TooFewRows(ds.n()));
    }
    if bins < 2 {
        return Err(SelectError::BadBins(bins));
    }
    let bins_eff = bins.min(ds.n());
    let y_codes: Vec<usize> = y.iter().map(|l| l.as_index()).collect();

    let mut scored: Vec<(usize, f64)> = (0..ds.d())
        .map(|c| {
            let codes = discretize(&ds.column(c), bins_eff);
            (c, mutual_information(&codes, &y_codes))
        })
        .collect();
    // descending MI; ties keep original column order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    Ok(RankedFeatures {
        entries: scored
            .into_iter()
            .map(|(c, mi)| (ds.feature_names[c].clone(), mi))
            .collect(),
        k_selected: k.min(ds.d()),
        bins: bins_eff,
        fit_rows: ds.row_ids.clone(),
    })
}
