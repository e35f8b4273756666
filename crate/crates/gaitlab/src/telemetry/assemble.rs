//! Session assembly from two interleaved decoded frame streams.
//!
//! Frames from each wrist arrive in device order but the two streams may
//! interleave arbitrarily. The assembler unwraps the 16-bit sequence counter,
//! drops duplicates, records losses, interpolates short gaps, and pairs the
//! two channels onto a single timeline.

use super::{DeviceId, GapRecord, Label, SensorFrame, Session, Task, WristSample};
use thiserror::Error;

/// Longest sequence gap (in missing samples) filled by linear interpolation.
/// Longer gaps stay as recorded discontinuities.
pub const MAX_INTERP_GAP: u32 = 5;

/// Paired samples whose device timestamps diverge by more than this are a
/// clock-skew failure.
const MAX_SKEW_MS: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssembleError {
    #[error("{0} wrist produced no usable frames")]
    EmptyChannel(DeviceId),
    #[error("channel clocks diverge by {skew_ms:.0} ms at t={at_ms:.0} ms (limit {MAX_SKEW_MS} ms)")]
    ClockSkew { at_ms: f64, skew_ms: f64 },
}

/// Session metadata supplied by the collector.
#[derive(Debug, Clone)]
pub struct AssembleMeta {
    pub subject_id: String,
    pub task: Task,
    pub sample_rate_hz: f64,
    pub label: Option<Label>,
}

impl AssembleMeta {
    pub fn new(subject_id: impl Into<String>, task: Task, sample_rate_hz: f64) -> AssembleMeta {
        AssembleMeta { subject_id: subject_id.into(), task, sample_rate_hz, label: None }
    }

    pub fn with_label(mut self, label: Label) -> AssembleMeta {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct UnwrappedSample {
    useq: u32,
    t_ms: f64,
    sample: WristSample,
}

/// Accumulates frames from two concurrently producing peripherals.
///
/// Appends are serialized through `&mut self` (single-writer contract); the
/// finished [`Session`] is immutable.
#[derive(Debug)]
pub struct SessionAssembler {
    meta: AssembleMeta,
    streams: [Vec<SensorFrame>; 2],
}

impl SessionAssembler {
    pub fn new(meta: AssembleMeta) -> SessionAssembler {
        SessionAssembler { meta, streams: [Vec::new(), Vec::new()] }
    }

    pub fn push(&mut self, frame: SensorFrame) {
        self.streams[frame.device_id.as_index()].push(frame);
    }

    pub fn push_all(&mut self, frames: impl IntoIterator<Item = SensorFrame>) {
        for f in frames {
            self.push(f);
        }
    }

    pub fn finish(self) -> Result<Session, AssembleError> {
        let period_ms = 1000.0 / self.meta.sample_rate_hz;
        let mut gap_report = Vec::new();

        let left = prepare_channel(&self.streams[0], DeviceId::LeftWrist, &mut gap_report)?;
        let right = prepare_channel(&self.streams[1], DeviceId::RightWrist, &mut gap_report)?;
        let (t_ms, left, right) = pair_channels(left, right, period_ms)?;

        Ok(Session {
            subject_id: self.meta.subject_id,
            task: self.meta.task,
            sample_rate_hz: self.meta.sample_rate_hz,
            t_ms,
            left,
            right,
            label: self.meta.label,
            gap_report,
        })
    }
}

impl DeviceId {
    fn as_index(self) -> usize {
        match self {
            DeviceId::LeftWrist => 0,
            DeviceId::RightWrist => 1,
        }
    }
}

/// Unwrap, order, dedupe, and gap-fill one device stream.
fn prepare_channel(
    frames: &[SensorFrame],
    device: DeviceId,
    gap_report: &mut Vec<GapRecord>,
) -> Result<Vec<UnwrappedSample>, AssembleError> {
    if frames.is_empty() {
        return Err(AssembleError::EmptyChannel(device));
    }

    // Unwrap the 16-bit counter in arrival order: a backward jump of more
    // than half the counter range is a wrap, smaller backward jumps are
    // reordering and keep the current epoch.
    let mut out: Vec<UnwrappedSample> = Vec::with_capacity(frames.len());
    let mut epoch = 0u32;
    let mut prev_raw = frames[0].seq;
    for f in frames {
        if prev_raw as i32 - f.seq as i32 > 32768 {
            epoch += 1;
        }
        prev_raw = f.seq;
        out.push(UnwrappedSample {
            useq: (epoch << 16) | f.seq as u32,
            t_ms: f.timestamp_ms as f64,
            sample: WristSample { accel: f.accel_g(), gyro: f.gyro_dps(), mag: f.mag_ut() },
        });
    }

    out.sort_by(|a, b| {
        a.useq
            .cmp(&b.useq)
            .then(a.t_ms.total_cmp(&b.t_ms))
            .then_with(|| cmp_sample(&a.sample, &b.sample))
    });
    out.dedup_by_key(|s| s.useq);

    // Detect losses and fill short holes.
    let mut filled: Vec<UnwrappedSample> = Vec::with_capacity(out.len());
    for s in out {
        if let Some(&prev) = filled.last() {
            let jump = s.useq - prev.useq;
            if jump > 1 {
                let missing = jump - 1;
                let interpolated = missing <= MAX_INTERP_GAP;
                gap_report.push(GapRecord {
                    device,
                    seq_before: prev.useq,
                    seq_after: s.useq,
                    missing,
                    interpolated,
                });
                if interpolated {
                    for j in 1..=missing {
                        let frac = j as f64 / jump as f64;
                        filled.push(UnwrappedSample {
                            useq: prev.useq + j,
                            t_ms: lerp(prev.t_ms, s.t_ms, frac),
                            sample: lerp_sample(&prev.sample, &s.sample, frac),
                        });
                    }
                }
            }
        }
        filled.push(s);
    }

    // Guard against devices that reused a timestamp across distinct seqs.
    let mut last_t = f64::NEG_INFINITY;
    filled.retain(|s| {
        let keep = s.t_ms > last_t;
        if keep {
            last_t = s.t_ms;
        }
        keep
    });

    if filled.is_empty() {
        return Err(AssembleError::EmptyChannel(device));
    }
    Ok(filled)
}

/// Pair the two prepared channels index-by-index after trimming whichever
/// stream started earlier. The left wrist supplies the session timeline.
fn pair_channels(
    left: Vec<UnwrappedSample>,
    right: Vec<UnwrappedSample>,
    period_ms: f64,
) -> Result<(Vec<f64>, Vec<WristSample>, Vec<WristSample>), AssembleError> {
    let mut li = 0usize;
    let mut ri = 0usize;
    while li < left.len() && ri < right.len() && (left[li].t_ms - right[ri].t_ms).abs() > period_ms / 2.0 {
        if left[li].t_ms < right[ri].t_ms {
            li += 1;
        } else {
            ri += 1;
        }
    }
    if li >= left.len() {
        return Err(AssembleError::EmptyChannel(DeviceId::LeftWrist));
    }
    if ri >= right.len() {
        return Err(AssembleError::EmptyChannel(DeviceId::RightWrist));
    }

    let n = (left.len() - li).min(right.len() - ri);
    let mut t_ms = Vec::with_capacity(n);
    let mut l_out = Vec::with_capacity(n);
    let mut r_out = Vec::with_capacity(n);
    for k in 0..n {
        let l = &left[li + k];
        let r = &right[ri + k];
        let skew = (l.t_ms - r.t_ms).abs();
        if skew > MAX_SKEW_MS {
            return Err(AssembleError::ClockSkew { at_ms: l.t_ms, skew_ms: skew });
        }
        t_ms.push(l.t_ms);
        l_out.push(l.sample);
        r_out.push(r.sample);
    }
    Ok((t_ms, l_out, r_out))
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac
}

fn lerp_sample(a: &WristSample, b: &WristSample, frac: f64) -> WristSample {
    let mix = |x: [f64; 3], y: [f64; 3]| [lerp(x[0], y[0], frac), lerp(x[1], y[1], frac), lerp(x[2], y[2], frac)];
    WristSample { accel: mix(a.accel, b.accel), gyro: mix(a.gyro, b.gyro), mag: mix(a.mag, b.mag) }
}

fn cmp_sample(a: &WristSample, b: &WristSample) -> std::cmp::Ordering {
    let av = a.accel.iter().chain(&a.gyro).chain(&a.mag);
    let bv = b.accel.iter().chain(&b.gyro).chain(&b.mag);
    for (x, y) in av.zip(bv) {
        let ord = x.total_cmp(y);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Assemble a session from an already-interleaved frame sequence.
pub fn assemble_session(
    frames: impl IntoIterator<Item = SensorFrame>,
    meta: AssembleMeta,
) -> Result<Session, AssembleError> {
    let mut asm = SessionAssembler::new(meta);
    asm.push_all(frames);
    asm.finish()
}

/// Turn an assembled session back into interleaved wire frames.
///
/// Inverse of assembly for loss-free sessions; physical values are quantized
/// to raw counts, saturating at the full-scale limits.
pub fn session_to_frames(session: &Session) -> Vec<SensorFrame> {
    let mut frames = Vec::with_capacity(session.len() * 2);
    for (i, &t) in session.t_ms.iter().enumerate() {
        let seq = (i % 65536) as u16;
        let ts = t.round().max(0.0) as u32;
        frames.push(sample_to_frame(DeviceId::LeftWrist, seq, ts, &session.left[i]));
        frames.push(sample_to_frame(DeviceId::RightWrist, seq, ts, &session.right[i]));
    }
    frames
}

fn sample_to_frame(device: DeviceId, seq: u16, timestamp_ms: u32, s: &WristSample) -> SensorFrame {
    let q = |v: f64, fs: f64| -> i16 {
        let raw = (v / fs * 32768.0).round();
        raw.clamp(i16::MIN as f64, i16::MAX as f64) as i16
    };
    SensorFrame {
        device_id: device,
        seq,
        timestamp_ms,
        accel: s.accel.map(|v| q(v, super::ACCEL_FULLSCALE_G)),
        gyro: s.gyro.map(|v| q(v, super::GYRO_FULLSCALE_DPS)),
        mag: s.mag.map(|v| q(v, super::MAG_FULLSCALE_UT)),
    }
}
