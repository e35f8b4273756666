//! Gait feature extraction from paired-wrist sessions.
//!
//! Fourteen features per session, fixed catalog order, grouped as:
//! step timing (cadence, interval mean/cv, count), accel intensity
//! (RMS, jerk), arm swing (per-side amplitude, asymmetry, regularity),
//! and rhythm (step/stride autocorrelation, dominant frequency, band ratio).

pub mod filter;
pub mod spectrum;
mod steps;

pub use steps::{detect_steps, detect_steps_with};

use crate::telemetry::{Label, Session, Task, WristSample};
use filter::{bandpass_filtfilt, FilterError};
use spectrum::{band_power_ratio, dominant_frequency, periodogram};
use thiserror::Error;

/// Feature catalog; every vector carries values in exactly this order.
pub const FEATURE_NAMES: [&str; 14] = [
    "cadence_spm",
    "step_time_mean_s",
    "step_time_cv",
    "step_count",
    "accel_rms_g",
    "jerk_rms",
    "swing_amp_left_dps",
    "swing_amp_right_dps",
    "swing_asym",
    "swing_regularity",
    "step_regularity",
    "stride_regularity",
    "dominant_freq_hz",
    "spectral_ratio",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("session lasts {duration_s:.1} s, need at least {min_s:.0} s")]
    TooShort { duration_s: f64, min_s: f64 },
    #[error("only {found} steps detected, need at least {min}")]
    TooFewSteps { found: usize, min: usize },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Tunable thresholds. Defaults follow wrist-worn gait conventions; override
/// individual fields for sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Lowpass cutoff for the step-detection envelope.
    pub step_lowpass_hz: f64,
    /// Peak threshold as a fraction of the rectified envelope's 95th
    /// percentile.
    pub peak_threshold_frac: f64,
    /// Dead time after an accepted peak on one wrist.
    pub refractory_s: f64,
    /// Cross-wrist duplicate window when merging event lists.
    pub merge_window_s: f64,
    /// Arm-swing band edges.
    pub swing_band_lo_hz: f64,
    pub swing_band_hi_hz: f64,
    /// Seconds trimmed from each end before feature analysis.
    pub trim_s: f64,
    /// Minimum full-session duration for feature extraction.
    pub min_duration_s: f64,
    /// Minimum detected steps for feature extraction.
    pub min_steps: usize,
    /// Search window for the dominant frequency.
    pub dominant_lo_hz: f64,
    pub dominant_hi_hz: f64,
    /// Band whose power fraction becomes `spectral_ratio`.
    pub spectral_band_lo_hz: f64,
    pub spectral_band_hi_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> FeatureConfig {
        FeatureConfig {
            step_lowpass_hz: 3.5,
            peak_threshold_frac: 0.3,
            refractory_s: 0.25,
            merge_window_s: 0.15,
            swing_band_lo_hz: 0.3,
            swing_band_hi_hz: 3.0,
            trim_s: 2.0,
            min_duration_s: 30.0,
            min_steps: 10,
            dominant_lo_hz: 0.5,
            dominant_hi_hz: 3.5,
            spectral_band_lo_hz: 0.5,
            spectral_band_hi_hz: 3.0,
        }
    }
}

/// One session's named feature values, catalog-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub subject_id: String,
    pub task: Task,
    pub label: Option<Label>,
    pub values: [f64; FEATURE_NAMES.len()],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.values.iter().copied())
    }
}

/// Linear-interpolation percentile of an ascending-sorted slice.
pub(crate) fn percentile(sorted: &[f64], frac: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = frac.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_std(x: &[f64]) -> f64 {
    let mu = mean(x);
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Normalized unbiased autocorrelation at integer lag, clamped to [-1, 1].
fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag == 0 {
        return 1.0;
    }
    if lag >= n || n < 2 {
        return 0.0;
    }
    let mu = mean(x);
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.0;
    }
    let cov = (0..n - lag)
        .map(|i| (x[i] - mu) * (x[i + lag] - mu))
        .sum::<f64>()
        / (n - lag) as f64;
    (cov / var).clamp(-1.0, 1.0)
}

/// Gyro axis with the largest variance: the swing plane, wherever the watch
/// was mounted.
fn pitch_axis(samples: &[WristSample]) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for axis in 0..3 {
        let chan: Vec<f64> = samples.iter().map(|w| w.gyro[axis]).collect();
        let var = population_std(&chan).powi(2);
        if var > best.1 {
            best = (axis, var);
        }
    }
    best.0
}

/// Compute the full catalog for one session with the default thresholds.
pub fn extract_features(session: &Session) -> Result<FeatureVector, FeatureError> {
    extract_features_with(session, &FeatureConfig::default())
}

/// Compute the full catalog for one session.
pub fn extract_features_with(
    session: &Session,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    if session.duration_s() < cfg.min_duration_s {
        return Err(FeatureError::TooShort {
            duration_s: session.duration_s(),
            min_s: cfg.min_duration_s,
        });
    }

    // drop gait initiation/termination transients
    let start = session.t_ms[0] + cfg.trim_s * 1000.0;
    let end = session.t_ms[session.len() - 1] - cfg.trim_s * 1000.0;
    let body = session.slice_time(start, end);
    let rate = body.sample_rate_hz;

    let step_times = detect_steps_with(&body, cfg)?;
    if step_times.len() < cfg.min_steps {
        return Err(FeatureError::TooFewSteps { found: step_times.len(), min: cfg.min_steps });
    }

    let intervals: Vec<f64> = step_times.windows(2).map(|w| w[1] - w[0]).collect();
    let step_mean = mean(&intervals);
    let step_cv = population_std(&intervals) / step_mean;
    let span = step_times.last().unwrap() - step_times[0];
    let cadence = 60.0 * (step_times.len() - 1) as f64 / span;

    // accel intensity over both wrists' dynamic magnitude
    let dyn_left = steps::dynamic_magnitude(&body.left);
    let dyn_right = steps::dynamic_magnitude(&body.right);
    let accel_rms = ((rms(&dyn_left).powi(2) + rms(&dyn_right).powi(2)) / 2.0).sqrt();
    let jerk = |d: &[f64]| -> f64 {
        let diffs: Vec<f64> = d.windows(2).map(|w| (w[1] - w[0]) * rate).collect();
        rms(&diffs)
    };
    let jerk_rms = ((jerk(&dyn_left).powi(2) + jerk(&dyn_right).powi(2)) / 2.0).sqrt();

    // arm swing from the band-passed dominant gyro axis
    let swing = |samples: &[WristSample]| -> Result<Vec<f64>, FeatureError> {
        let axis = pitch_axis(samples);
        let chan: Vec<f64> = samples.iter().map(|w| w.gyro[axis]).collect();
        Ok(bandpass_filtfilt(&chan, cfg.swing_band_lo_hz, cfg.swing_band_hi_hz, rate)?)
    };
    let swing_left = swing(&body.left)?;
    let swing_right = swing(&body.right)?;
    let p90_abs = |x: &[f64]| -> f64 {
        let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        a.sort_by(f64::total_cmp);
        percentile(&a, 0.90)
    };
    let amp_left = p90_abs(&swing_left);
    let amp_right = p90_abs(&swing_right);
    let amp_max = amp_left.max(amp_right);
    let swing_asym = if amp_max > 0.0 { (amp_left - amp_right).abs() / amp_max } else { 0.0 };

    // regularity at the step and stride (= 2 steps) lags, computed on the
    // smoothed envelope: raw impact spikes are only a sample or two wide, so
    // unsmoothed autocorrelation would collapse under harmless timing jitter
    let step_lag = (step_mean * rate).round() as usize;
    let stride_lag = (2.0 * step_mean * rate).round() as usize;
    let dyn_mean: Vec<f64> =
        dyn_left.iter().zip(&dyn_right).map(|(a, b)| (a + b) / 2.0).collect();
    let envelope = filter::lowpass_filtfilt(&dyn_mean, cfg.step_lowpass_hz, rate)?;
    let step_regularity = autocorrelation(&envelope, step_lag);
    let stride_regularity = autocorrelation(&envelope, stride_lag);
    // swing regularity on the louder arm, one full swing cycle apart
    let dominant_swing = if amp_left >= amp_right { &swing_left } else { &swing_right };
    let swing_regularity = autocorrelation(dominant_swing, stride_lag);

    let (freqs, power) = periodogram(&envelope, rate);
    let dominant = dominant_frequency(&freqs, &power, cfg.dominant_lo_hz, cfg.dominant_hi_hz);
    let spectral_ratio =
        band_power_ratio(&freqs, &power, cfg.spectral_band_lo_hz, cfg.spectral_band_hi_hz);

    let values = [
        cadence,
        step_mean,
        step_cv,
        step_times.len() as f64,
        accel_rms,
        jerk_rms,
        amp_left,
        amp_right,
        swing_asym,
        swing_regularity,
        step_regularity,
        stride_regularity,
        dominant,
        spectral_ratio,
    ];
    debug_assert!(values.iter().all(|v| v.is_finite()));

    Ok(FeatureVector {
        subject_id: session.subject_id.clone(),
        task: session.task,
        label: session.label,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("column {0:?} missing or out of place")]
    SchemaMismatch(String),
    #[error("unparseable value at line {line}, column {column:?}")]
    BadValue { line: usize, column: String },
    #[error("table has no rows")]
    Empty,
}

/// Long-format CSV: one row per (subject, task).
pub fn features_to_csv(rows: &[FeatureVector]) -> String {
    let mut out = String::from("subject_id,task,label");
    for name in FEATURE_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in rows {
        use std::fmt::Write;
        let label = r.label.map(|l| l.as_u8().to_string()).unwrap_or_else(|| "?".into());
        write!(out, "{},{},{label}", r.subject_id, r.task).unwrap();
        for v in r.values {
            write!(out, ",{v:e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parse a long-format CSV written by [`features_to_csv`]. Lines starting
/// with `#` (tool provenance headers) are ignored.
pub fn features_from_csv(text: &str) -> Result<Vec<FeatureVector>, TableError> {
    let mut lines =
        text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#'));
    let (_, header) = lines.next().ok_or(TableError::Empty)?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: Vec<String> = ["subject_id", "task", "label"]
        .into_iter()
        .map(String::from)
        .chain(FEATURE_NAMES.iter().map(|s| s.to_string()))
        .collect();
    for (i, want) in expected.iter().enumerate() {
        if names.get(i).copied() != Some(want.as_str()) {
            return Err(TableError::SchemaMismatch(want.clone()));
        }
    }

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let field = |i: usize| -> Result<&str, TableError> {
            fields.get(i).copied().ok_or_else(|| TableError::BadValue {
                line: lineno + 1,
                column: expected[i].clone(),
            })
        };
        let task = Task::from_str(field(1)?).ok_or_else(|| TableError::BadValue {
            line: lineno + 1,
            column: "task".into(),
        })?;
        let label = match field(2)? {
            "?" => None,
            "0" => Some(Label::Control),
            "1" => Some(Label::Pd),
            _ => {
                return Err(TableError::BadValue { line: lineno + 1, column: "label".into() })
            }
        };
        let mut values = [0f64; FEATURE_NAMES.len()];
        for (j, slot) in values.iter_mut().enumerate() {
            *slot = field(3 + j)?.parse().map_err(|_| TableError::BadValue {
                line: lineno + 1,
                column: FEATURE_NAMES[j].to_string(),
            })?;
        }
        rows.push(FeatureVector { subject_id: field(0)?.to_string(), task, label, values });
    }
    if rows.is_empty() {
        return Err(TableError::Empty);
    }
    Ok(rows)
}

/// Pivot long rows into one wide row per subject with `walk_*` and `dual_*`
/// column groups. Subjects missing either task are skipped and reported in
/// the second return value.
pub fn wide_table(rows: &[FeatureVector]) -> (String, Vec<String>) {
    let mut header = String::from("subject_id,label");
    for task in [Task::Walk, Task::DualTask] {
        for name in FEATURE_NAMES {
            header.push(',');
            header.push_str(&format!("{}_{name}", task.as_str()));
        }
    }
    header.push('\n');

    // group by subject, preserving first-appearance order
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.subject_id.as_str()) {
            order.push(&r.subject_id);
        }
    }

    let mut out = header;
    let mut skipped = Vec::new();
    for subject in order {
        let walk = rows.iter().find(|r| r.subject_id == subject && r.task == Task::Walk);
        let dual = rows.iter().find(|r| r.subject_id == subject && r.task == Task::DualTask);
        let (Some(walk), Some(dual)) = (walk, dual) else {
            skipped.push(subject.to_string());
            continue;
        };
        use std::fmt::Write;
        let label = walk
            .label
            .or(dual.label)
            .map(|l| l.as_u8().to_string())
            .unwrap_or_else(|| "?".into());
        write!(out, "{subject},{label}").unwrap();
        for r in [walk, dual] {
            for v in r.values {
                write!(out, ",{v:e}").unwrap();
            }
        }
        out.push('\n');
    }
    (out, skipped)
}
