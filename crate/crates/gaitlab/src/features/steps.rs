//! Step event detection from wrist accelerometer magnitude.
//!
//! Heel strikes reach both wrists as short transients riding on gravity.
//! Each wrist is processed alone (magnitude, gravity baseline removed,
//! low-passed, relative-threshold peak picking), then the two event lists
//! are merged and near-duplicates collapsed.

use super::filter::lowpass_filtfilt;
use super::{percentile, FeatureConfig, FeatureError};
use crate::telemetry::{Session, WristSample};

/// Detect step times (seconds) with the default thresholds.
pub fn detect_steps(session: &Session) -> Result<Vec<f64>, FeatureError> {
    detect_steps_with(session, &FeatureConfig::default())
}

/// Detect step times (seconds) with explicit thresholds.
pub fn detect_steps_with(
    session: &Session,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    const MIN_DETECT_S: f64 = 10.0;
    if session.duration_s() < MIN_DETECT_S {
        return Err(FeatureError::TooShort {
            duration_s: session.duration_s(),
            min_s: MIN_DETECT_S,
        });
    }

    let left = wrist_events(&session.left, &session.t_ms, session.sample_rate_hz, cfg)?;
    let right = wrist_events(&session.right, &session.t_ms, session.sample_rate_hz, cfg)?;

    // merge the sorted lists, then collapse events landing within the
    // cross-wrist window (both wrists feel the same strike)
    let mut merged = Vec::with_capacity(left.len() + right.len());
    let (mut li, mut ri) = (0, 0);
    while li < left.len() || ri < right.len() {
        let take_left = ri >= right.len() || (li < left.len() && left[li] <= right[ri]);
        if take_left {
            merged.push(left[li]);
            li += 1;
        } else {
            merged.push(right[ri]);
            ri += 1;
        }
    }
    let mut steps: Vec<f64> = Vec::with_capacity(merged.len());
    for t in merged {
        match steps.last() {
            Some(&last) if t - last < cfg.merge_window_s => {}
            _ => steps.push(t),
        }
    }
    Ok(steps)
}

/// Dynamic accel magnitude: Euclidean norm minus its session median.
///
/// The median tracks the gravity baseline without being pulled by the sparse
/// impact spikes, and scales linearly with the input, which keeps the whole
/// detector invariant to an overall accel gain factor.
pub(super) fn dynamic_magnitude(samples: &[WristSample]) -> Vec<f64> {
    let mags: Vec<f64> = samples.iter().map(WristSample::accel_magnitude).collect();
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = percentile(&sorted, 0.5);
    mags.into_iter().map(|m| m - baseline).collect()
}

fn wrist_events(
    samples: &[WristSample],
    t_ms: &[f64],
    rate_hz: f64,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>, FeatureError> {
    let dynamic = dynamic_magnitude(samples);
    let filtered = lowpass_filtfilt(&dynamic, cfg.step_lowpass_hz, rate_hz)?;

    let mut rectified: Vec<f64> = filtered.iter().map(|v| v.abs()).collect();
    rectified.sort_by(f64::total_cmp);
    let threshold = cfg.peak_threshold_frac * percentile(&rectified, 0.95);

    let mut events: Vec<(f64, f64)> = Vec::new(); // (time_s, height)
    for i in 1..filtered.len().saturating_sub(1) {
        let v = filtered[i];
        if v > threshold && v > filtered[i - 1] && v >= filtered[i + 1] {
            let t = t_ms[i] / 1000.0;
            match events.last() {
                Some(&(last_t, last_v)) if t - last_t < cfg.refractory_s => {
                    // keep the taller peak inside one refractory window
                    if v > last_v {
                        *events.last_mut().unwrap() = (t, v);
                    }
                }
                _ => events.push((t, v)),
            }
        }
    }
    Ok(events.into_iter().map(|(t, _)| t).collect())
}
