//! Synthetic two-wrist gait sessions with known ground truth.
//!
//! The kinematic model is deliberately simple and analyzable:
//! arm-swing angular velocity is a pair of anti-phase sinusoids whose phase
//! advances by pi per step (one full cycle per stride), step impacts are
//! short decaying exponentials on the vertical accelerometer of both wrists,
//! and an optional 4-6 Hz tremor rides on the right wrist gyro. Step
//! intervals are drawn once per step, so every session carries its exact
//! event times as ground truth.

use crate::telemetry::{Label, Session, Task, WristSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Impact transient time constant.
const IMPACT_TAU_S: f64 = 0.010;
/// Impacts are materialized for this long after each step.
const IMPACT_WINDOW_S: f64 = 0.08;
/// Cognitive load model: dual-task cadence multiplier.
const DUAL_CADENCE_FACTOR: f64 = 0.9;
/// Cognitive load model: dual-task step-interval variability multiplier.
const DUAL_CV_FACTOR: f64 = 1.5;
/// Ambient magnetic field carried in every sample (never used by features).
const MAG_FIELD_UT: [f64; 3] = [21.0, 4.5, -43.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaitSimError {
    #[error("invalid gait parameters: {0}")]
    InvalidParams(String),
    #[error("cohort config line {line}: {msg}")]
    BadConfig { line: usize, msg: String },
}

/// Per-subject gait generator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitParams {
    /// Steps per minute.
    pub cadence_spm: f64,
    /// Coefficient of variation of the step interval, in [0, 0.5].
    pub step_time_cv: f64,
    /// Peak left-arm angular velocity.
    pub swing_amp_left_dps: f64,
    /// Peak right-arm angular velocity before asymmetry reduction.
    pub swing_amp_right_dps: f64,
    /// Fraction in [0, 1) knocked off the right arm's amplitude.
    pub swing_asym: f64,
    /// Step impact spike amplitude.
    pub impact_g: f64,
    /// Rest tremor frequency; only matters when `tremor_amp_dps > 0`.
    pub tremor_hz: f64,
    /// Rest tremor amplitude on the right wrist gyro.
    pub tremor_amp_dps: f64,
    /// White noise std on every accelerometer axis.
    pub noise_g: f64,
    /// White noise std on every gyro axis.
    pub noise_dps: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl GaitParams {
    /// Typical unimpaired gait.
    pub fn control() -> GaitParams {
        GaitParams {
            cadence_spm: 115.0,
            step_time_cv: 0.03,
            swing_amp_left_dps: 140.0,
            swing_amp_right_dps: 140.0,
            swing_asym: 0.05,
            impact_g: 0.5,
            tremor_hz: 0.0,
            tremor_amp_dps: 0.0,
            noise_g: 0.01,
            noise_dps: 2.0,
            duration_s: 60.0,
            sample_rate_hz: 100.0,
            seed: 0,
        }
    }

    /// Slower, more variable gait with reduced and asymmetric arm swing plus
    /// rest tremor. Magnitudes are screening-test placeholders, not clinical
    /// measurements.
    pub fn pd() -> GaitParams {
        GaitParams {
            cadence_spm: 100.0,
            step_time_cv: 0.08,
            swing_amp_left_dps: 80.0,
            swing_amp_right_dps: 80.0,
            swing_asym: 0.4,
            impact_g: 0.35,
            tremor_hz: 5.0,
            tremor_amp_dps: 15.0,
            ..GaitParams::control()
        }
    }

    pub fn validate(&self) -> Result<(), GaitSimError> {
        let bad = |msg: String| Err(GaitSimError::InvalidParams(msg));
        if !(self.cadence_spm > 0.0) {
            return bad(format!("cadence_spm {} must be positive", self.cadence_spm));
        }
        if !(0.0..=0.5).contains(&self.step_time_cv) {
            return bad(format!("step_time_cv {} outside [0, 0.5]", self.step_time_cv));
        }
        if !(0.0..1.0).contains(&self.swing_asym) {
            return bad(format!("swing_asym {} outside [0, 1)", self.swing_asym));
        }
        for (name, v) in [
            ("swing_amp_left_dps", self.swing_amp_left_dps),
            ("swing_amp_right_dps", self.swing_amp_right_dps),
            ("impact_g", self.impact_g),
            ("tremor_hz", self.tremor_hz),
            ("tremor_amp_dps", self.tremor_amp_dps),
            ("noise_g", self.noise_g),
            ("noise_dps", self.noise_dps),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} {v} must be >= 0"));
            }
        }
        if !(self.duration_s >= 10.0) {
            return bad(format!("duration_s {} must be >= 10", self.duration_s));
        }
        if !(self.sample_rate_hz >= 20.0) {
            return bad(format!("sample_rate_hz {} must be >= 20", self.sample_rate_hz));
        }
        Ok(())
    }
}

impl Default for GaitParams {
    fn default() -> GaitParams {
        GaitParams::control()
    }
}

/// Exact generator internals for one session, for oracle tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitTruth {
    /// Heel-strike times in seconds, both feet merged (one event per step).
    pub step_times: Vec<f64>,
    /// Cadence the generator targeted after any task adjustment.
    pub cadence_target_spm: f64,
    /// Cadence realized by the drawn step times.
    pub cadence_actual_spm: f64,
    /// Effective peak amplitudes after asymmetry reduction.
    pub swing_amp_left_dps: f64,
    pub swing_amp_right_dps: f64,
}

/// Generate one session plus its ground truth.
pub fn generate_session_with_truth(
    params: &GaitParams,
    subject_id: &str,
    task: Task,
) -> Result<(Session, GaitTruth), GaitSimError> {
    params.validate()?;

    let (cadence, cv) = match task {
        Task::Walk => (params.cadence_spm, params.step_time_cv),
        Task::DualTask => (
            params.cadence_spm * DUAL_CADENCE_FACTOR,
            (params.step_time_cv * DUAL_CV_FACTOR).min(0.5),
        ),
    };

    let mut rng_steps = ChaCha8Rng::seed_from_u64(params.seed);
    let mut rng_noise = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9E37_79B9_7F4A_7C15);

    // Step times: first strike half a period in, then jittered intervals.
    let mean_period = 60.0 / cadence;
    let jitter = Normal::new(0.0, cv * mean_period).expect("cv bounded by validate");
    let mut step_times = Vec::with_capacity((params.duration_s / mean_period) as usize + 2);
    let mut t = mean_period / 2.0;
    while t < params.duration_s {
        step_times.push(t);
        let period = (mean_period + jitter.sample(&mut rng_steps))
            .clamp(0.3 * mean_period, 1.7 * mean_period);
        t += period;
    }
    if step_times.len() < 2 {
        return Err(GaitSimError::InvalidParams(
            "duration too short for two steps at this cadence".into(),
        ));
    }

    let amp_left = params.swing_amp_left_dps;
    let amp_right = params.swing_amp_right_dps * (1.0 - params.swing_asym);
    let tremor_phase = rng_steps.gen_range(0.0..std::f64::consts::TAU);

    let n = (params.duration_s * params.sample_rate_hz).round() as usize;
    let dt = 1.0 / params.sample_rate_hz;
    let mut t_ms = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);

    // Pointer into step_times for the phase piece and the impact window.
    let mut seg = 0usize;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    // one draw per axis regardless of std, keeping streams aligned
    let noise = |rng: &mut ChaCha8Rng, std: f64| -> f64 { std_normal.sample(rng) * std };

    for i in 0..n {
        let ti = i as f64 * dt;
        t_ms.push(ti * 1000.0);

        // piecewise-linear swing phase: advances by pi per step interval
        while seg + 2 < step_times.len() && ti >= step_times[seg + 1] {
            seg += 1;
        }
        let seg_len = step_times[seg + 1] - step_times[seg];
        let phase = std::f64::consts::PI * (seg as f64 + (ti - step_times[seg]) / seg_len);
        let swing = phase.sin();

        // impacts from every step whose transient still overlaps ti
        let mut impact = 0.0;
        let mut k = seg + 1;
        loop {
            let tk = step_times[k];
            if tk <= ti && ti - tk < IMPACT_WINDOW_S {
                impact += params.impact_g * (-(ti - tk) / IMPACT_TAU_S).exp();
            }
            if k == 0 || tk < ti - IMPACT_WINDOW_S {
                break;
            }
            k -= 1;
        }

        let tremor = params.tremor_amp_dps
            * (std::f64::consts::TAU * params.tremor_hz * ti + tremor_phase).sin();

        let l = WristSample {
            accel: [
                noise(&mut rng_noise, params.noise_g),
                noise(&mut rng_noise, params.noise_g),
                1.0 + impact + noise(&mut rng_noise, params.noise_g),
            ],
            gyro: [
                noise(&mut rng_noise, params.noise_dps),
                amp_left * swing + noise(&mut rng_noise, params.noise_dps),
                noise(&mut rng_noise, params.noise_dps),
            ],
            mag: MAG_FIELD_UT,
        };
        let r = WristSample {
            accel: [
                noise(&mut rng_noise, params.noise_g),
                noise(&mut rng_noise, params.noise_g),
                1.0 + impact + noise(&mut rng_noise, params.noise_g),
            ],
            gyro: [
                noise(&mut rng_noise, params.noise_dps),
                -amp_right * swing + tremor + noise(&mut rng_noise, params.noise_dps),
                noise(&mut rng_noise, params.noise_dps),
            ],
            mag: MAG_FIELD_UT,
        };
        left.push(l);
        right.push(r);
    }

    let span = step_times.last().unwrap() - step_times[0];
    let truth = GaitTruth {
        cadence_target_spm: cadence,
        cadence_actual_spm: 60.0 * (step_times.len() - 1) as f64 / span,
        swing_amp_left_dps: amp_left,
        swing_amp_right_dps: amp_right,
        step_times,
    };

    let session = Session {
        subject_id: subject_id.to_string(),
        task,
        sample_rate_hz: params.sample_rate_hz,
        t_ms,
        left,
        right,
        label: None,
        gap_report: Vec::new(),
    };
    Ok((session, truth))
}

/// Generate one session, discarding the ground truth.
pub fn generate_session(
    params: &GaitParams,
    subject_id: &str,
    task: Task,
) -> Result<Session, GaitSimError> {
    generate_session_with_truth(params, subject_id, task).map(|(s, _)| s)
}

/// Per-field Gaussian spread applied around a group's mean parameters.
/// `swing_amp_dps` shifts both arms by the same draw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamJitter {
    pub cadence_spm: f64,
    pub step_time_cv: f64,
    pub swing_amp_dps: f64,
    pub swing_asym: f64,
    pub impact_g: f64,
    pub tremor_amp_dps: f64,
}

impl ParamJitter {
    /// Mild population spread for unimpaired subjects.
    pub fn control() -> ParamJitter {
        ParamJitter {
            cadence_spm: 6.0,
            step_time_cv: 0.008,
            swing_amp_dps: 15.0,
            swing_asym: 0.02,
            impact_g: 0.08,
            tremor_amp_dps: 0.0,
        }
    }

    /// Wider spread for the impaired group.
    pub fn pd() -> ParamJitter {
        ParamJitter {
            cadence_spm: 7.0,
            step_time_cv: 0.015,
            swing_amp_dps: 15.0,
            swing_asym: 0.06,
            impact_g: 0.08,
            tremor_amp_dps: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortGroup {
    pub mean: GaitParams,
    pub jitter: ParamJitter,
}

/// Recipe for a labeled two-task cohort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortSpec {
    pub n_control: usize,
    pub n_pd: usize,
    pub control: CohortGroup,
    pub pd: CohortGroup,
    pub seed: u64,
}

impl CohortSpec {
    pub fn new(n_control: usize, n_pd: usize, seed: u64) -> CohortSpec {
        CohortSpec {
            n_control,
            n_pd,
            control: CohortGroup { mean: GaitParams::control(), jitter: ParamJitter::control() },
            pd: CohortGroup { mean: GaitParams::pd(), jitter: ParamJitter::pd() },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GaitSimError> {
        if self.n_control + self.n_pd < 2 {
            return Err(GaitSimError::InvalidParams("cohort needs at least 2 subjects".into()));
        }
        self.control.mean.validate()?;
        self.pd.mean.validate()
    }

    /// Parse a key=value config. Unset keys keep the preset defaults.
    /// `#` starts a comment; `duration_s` and `sample_rate_hz` at top level
    /// apply to both groups.
    pub fn parse(text: &str) -> Result<CohortSpec, GaitSimError> {
        let mut spec = CohortSpec::new(40, 40, 0);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| GaitSimError::BadConfig { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let num = || -> Result<f64, GaitSimError> {
                value.parse::<f64>().map_err(|_| bad(format!("{value:?} is not a number")))
            };
            match key {
                "n_control" => spec.n_control = num()? as usize,
                "n_pd" => spec.n_pd = num()? as usize,
                "seed" => {
                    spec.seed = value
                        .parse::<u64>()
                        .map_err(|_| bad(format!("{value:?} is not a seed")))?
                }
                "duration_s" => {
                    let v = num()?;
                    spec.control.mean.duration_s = v;
                    spec.pd.mean.duration_s = v;
                }
                "sample_rate_hz" => {
                    let v = num()?;
                    spec.control.mean.sample_rate_hz = v;
                    spec.pd.mean.sample_rate_hz = v;
                }
                _ => {
                    let (group, field) = key
                        .split_once('.')
                        .ok_or_else(|| bad(format!("unknown key {key:?}")))?;
                    let g = match group {
                        "control" => &mut spec.control,
                        "pd" => &mut spec.pd,
                        _ => return Err(bad(format!("unknown group {group:?}"))),
                    };
                    let v = num()?;
                    if let Some(jfield) = field.strip_prefix("jitter.") {
                        match jfield {
                            "cadence_spm" => g.jitter.cadence_spm = v,
                            "step_time_cv" => g.jitter.step_time_cv = v,
                            "swing_amp_dps" => g.jitter.swing_amp_dps = v,
                            "swing_asym" => g.jitter.swing_asym = v,
                            "impact_g" => g.jitter.impact_g = v,
                            "tremor_amp_dps" => g.jitter.tremor_amp_dps = v,
                            _ => return Err(bad(format!("unknown jitter field {jfield:?}"))),
                        }
                    } else {
                        match field {
                            "cadence_spm" => g.mean.cadence_spm = v,
                            "step_time_cv" => g.mean.step_time_cv = v,
                            "swing_amp_left_dps" => g.mean.swing_amp_left_dps = v,
                            "swing_amp_right_dps" => g.mean.swing_amp_right_dps = v,
                            "swing_asym" => g.mean.swing_asym = v,
                            "impact_g" => g.mean.impact_g = v,
                            "tremor_hz" => g.mean.tremor_hz = v,
                            "tremor_amp_dps" => g.mean.tremor_amp_dps = v,
                            "noise_g" => g.mean.noise_g = v,
                            "noise_dps" => g.mean.noise_dps = v,
                            "duration_s" => g.mean.duration_s = v,
                            "sample_rate_hz" => g.mean.sample_rate_hz = v,
                            _ => return Err(bad(format!("unknown field {field:?}"))),
                        }
                    }
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One subject's drawn parameters and identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPlan {
    pub subject_id: String,
    pub label: Label,
    /// Walk-task generator params; the dual task reuses them with a fresh
    /// seed so the two recordings share the subject, not the noise.
    pub params: GaitParams,
    pub dual_seed: u64,
}

/// Draw every subject's parameters deterministically from the cohort seed.
pub fn plan_cohort(spec: &CohortSpec) -> Result<Vec<SubjectPlan>, GaitSimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut plans = Vec::with_capacity(spec.n_control + spec.n_pd);
    for (label, group, count, prefix) in [
        (Label::Control, &spec.control, spec.n_control, "ctl"),
        (Label::Pd, &spec.pd, spec.n_pd, "pd"),
    ] {
        for i in 0..count {
            let params = draw_params(group, &mut rng);
            plans.push(SubjectPlan {
                subject_id: format!("{prefix}_{:03}", i + 1),
                label,
                params,
                dual_seed: rng.gen(),
            });
        }
    }
    Ok(plans)
}

fn draw_params(group: &CohortGroup, rng: &mut ChaCha8Rng) -> GaitParams {
    let mut draw = |mean: f64, sd: f64| -> f64 {
        // always consume one draw so the stream shape is jitter-independent
        let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
        mean + z * sd
    };
    let m = group.mean;
    let j = group.jitter;
    let swing_shift = draw(0.0, j.swing_amp_dps);
    GaitParams {
        cadence_spm: draw(m.cadence_spm, j.cadence_spm).max(40.0),
        step_time_cv: draw(m.step_time_cv, j.step_time_cv).clamp(0.0, 0.5),
        swing_amp_left_dps: (m.swing_amp_left_dps + swing_shift).max(0.0),
        swing_amp_right_dps: (m.swing_amp_right_dps + swing_shift).max(0.0),
        swing_asym: draw(m.swing_asym, j.swing_asym).clamp(0.0, 0.95),
        impact_g: draw(m.impact_g, j.impact_g).max(0.05),
        tremor_hz: m.tremor_hz,
        tremor_amp_dps: draw(m.tremor_amp_dps, j.tremor_amp_dps).max(0.0),
        noise_g: m.noise_g,
        noise_dps: m.noise_dps,
        duration_s: m.duration_s,
        sample_rate_hz: m.sample_rate_hz,
        seed: rng.gen(),
    }
}

/// Generate the full labeled cohort: every subject performs both tasks, so
/// the output holds `2 * (n_control + n_pd)` sessions in subject order with
/// the walk task first for each subject.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<Session>, GaitSimError> {
    let mut sessions = Vec::new();
    for plan in plan_cohort(spec)? {
        let mut walk = generate_session(&plan.params, &plan.subject_id, Task::Walk)?;
        walk.label = Some(plan.label);
        sessions.push(walk);

        let dual_params = GaitParams { seed: plan.dual_seed, ..plan.params };
        let mut dual = generate_session(&dual_params, &plan.subject_id, Task::DualTask)?;
        dual.label = Some(plan.label);
        sessions.push(dual);
    }
    Ok(sessions)
}
