//! Peripheral-to-central wire protocol and session assembly.
//!
//! Two wrist peripherals stream fixed-length binary frames to a central
//! collector. This module decodes and validates those frames, merges the two
//! interleaved streams into an aligned [`Session`], and persists sessions as
//! CSV. The byte format is identical whether frames come from a file, stdin,
//! or a TCP socket.

mod assemble;
mod session_csv;
mod wire;

pub use assemble::{assemble_session, session_to_frames, AssembleError, AssembleMeta, SessionAssembler};
pub use session_csv::{session_from_csv, session_to_csv, SessionCsvError};
pub use wire::{crc8, decode_frame, encode_frame, scan_stream, DecodeStats, FrameScanner, WireError, FRAME_LEN, MAGIC};

/// Accelerometer full-scale range: signed 16-bit counts span ±4 g.
pub const ACCEL_FULLSCALE_G: f64 = 4.0;
/// Gyroscope full-scale range: ±2000 °/s.
pub const GYRO_FULLSCALE_DPS: f64 = 2000.0;
/// Magnetometer full-scale range: ±400 µT.
pub const MAG_FULLSCALE_UT: f64 = 400.0;

/// Which wrist a peripheral is strapped to. Wire values are 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceId {
    LeftWrist = 1,
    RightWrist = 2,
}

impl DeviceId {
    pub fn from_wire(byte: u8) -> Option<DeviceId> {
        match byte {
            1 => Some(DeviceId::LeftWrist),
            2 => Some(DeviceId::RightWrist),
            _ => None,
        }
    }

    pub fn as_wire(self) -> u8 {
        self as u8
    }
}

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviceId::LeftWrist => write!(f, "left"),
            DeviceId::RightWrist => write!(f, "right"),
        }
    }
}

/// The two walking tasks carried through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    /// One-minute straight-line walk.
    Walk,
    /// One-minute walk while serially subtracting (cognitive load).
    DualTask,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Walk => "walk",
            Task::DualTask => "dual",
        }
    }

    pub fn from_str(s: &str) -> Option<Task> {
        match s {
            "walk" => Some(Task::Walk),
            "dual" => Some(Task::DualTask),
            _ => None,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Control = 0,
    Pd = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Control),
            1 => Some(Label::Pd),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_index(self) -> usize {
        self as usize
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Control => "control",
            Label::Pd => "pd",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped 9-axis sample from one wrist peripheral, in raw counts.
///
/// Physical conversions are linear: `value = counts * fullscale / 32768`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorFrame {
    pub device_id: DeviceId,
    /// 16-bit wrap-around sample counter.
    pub seq: u16,
    /// Milliseconds since session start.
    pub timestamp_ms: u32,
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
    pub mag: [i16; 3],
}

fn counts_to_unit(counts: i16, fullscale: f64) -> f64 {
    counts as f64 * fullscale / 32768.0
}

fn unit_to_counts(value: f64, fullscale: f64, field: &'static str) -> Result<i16, WireError> {
    let raw = (value / fullscale * 32768.0).round();
    if raw < i16::MIN as f64 || raw > i16::MAX as f64 || !raw.is_finite() {
        return Err(WireError::OutOfRange { field, value });
    }
    Ok(raw as i16)
}

impl SensorFrame {
    /// Build a frame from physical-unit values, converting to raw counts.
    /// Values outside the full-scale ranges are an encoding error.
    pub fn from_physical(
        device_id: DeviceId,
        seq: u16,
        timestamp_ms: u32,
        accel_g: [f64; 3],
        gyro_dps: [f64; 3],
        mag_ut: [f64; 3],
    ) -> Result<SensorFrame, WireError> {
        let conv3 = |v: [f64; 3], fs: f64, field: &'static str| -> Result<[i16; 3], WireError> {
            Ok([
                unit_to_counts(v[0], fs, field)?,
                unit_to_counts(v[1], fs, field)?,
                unit_to_counts(v[2], fs, field)?,
            ])
        };
        Ok(SensorFrame {
            device_id,
            seq,
            timestamp_ms,
            accel: conv3(accel_g, ACCEL_FULLSCALE_G, "accel")?,
            gyro: conv3(gyro_dps, GYRO_FULLSCALE_DPS, "gyro")?,
            mag: conv3(mag_ut, MAG_FULLSCALE_UT, "mag")?,
        })
    }

    pub fn accel_g(&self) -> [f64; 3] {
        self.accel.map(|c| counts_to_unit(c, ACCEL_FULLSCALE_G))
    }

    pub fn gyro_dps(&self) -> [f64; 3] {
        self.gyro.map(|c| counts_to_unit(c, GYRO_FULLSCALE_DPS))
    }

    pub fn mag_ut(&self) -> [f64; 3] {
        self.mag.map(|c| counts_to_unit(c, MAG_FULLSCALE_UT))
    }
}

/// One aligned sample of a wrist channel, in physical units (g, °/s, µT).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WristSample {
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    pub mag: [f64; 3],
}

impl WristSample {
    pub fn accel_magnitude(&self) -> f64 {
        (self.accel[0] * self.accel[0] + self.accel[1] * self.accel[1] + self.accel[2] * self.accel[2]).sqrt()
    }
}

/// A detected sequence-number gap in one device stream.
///
/// `seq_before`/`seq_after` are unwrapped sequence numbers around the hole.
/// Gaps of up to [`assemble::MAX_INTERP_GAP`] samples are filled by linear
/// interpolation; longer ones are left as timeline discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapRecord {
    pub device: DeviceId,
    pub seq_before: u32,
    pub seq_after: u32,
    pub missing: u32,
    pub interpolated: bool,
}

/// Aligned two-channel recording of one subject performing one task.
///
/// Both wrists share a single timeline `t_ms` (left wrist is the reference
/// clock); `left`, `right`, and `t_ms` always have equal length. Sessions are
/// immutable once assembled and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub task: Task,
    pub sample_rate_hz: f64,
    pub t_ms: Vec<f64>,
    pub left: Vec<WristSample>,
    pub right: Vec<WristSample>,
    pub label: Option<Label>,
    pub gap_report: Vec<GapRecord>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.t_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_ms.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.t_ms.first(), self.t_ms.last()) {
            (Some(first), Some(last)) => (last - first) / 1000.0,
            _ => 0.0,
        }
    }

    /// Check structural invariants plus the expected one-minute task window.
    /// Returns human-readable problems; empty means the session is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.t_ms.len() != self.left.len() || self.t_ms.len() != self.right.len() {
            problems.push(format!(
                "channel lengths differ: t={} left={} right={}",
                self.t_ms.len(),
                self.left.len(),
                self.right.len()
            ));
        }
        if self.t_ms.windows(2).any(|w| w[1] <= w[0]) {
            problems.push("timestamps not strictly increasing".to_string());
        }
        let dur = self.duration_s();
        if !(50.0..=70.0).contains(&dur) {
            problems.push(format!("duration {dur:.1} s outside the 50-70 s task window"));
        }
        problems
    }

    /// Return a copy restricted to samples with `t_ms` in `[start_ms, end_ms)`.
    pub fn slice_time(&self, start_ms: f64, end_ms: f64) -> Session {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.t_ms[i] >= start_ms && self.t_ms[i] < end_ms)
            .collect();
        Session {
            subject_id: self.subject_id.clone(),
            task: self.task,
            sample_rate_hz: self.sample_rate_hz,
            t_ms: keep.iter().map(|&i| self.t_ms[i]).collect(),
            left: keep.iter().map(|&i| self.left[i]).collect(),
            right: keep.iter().map(|&i| self.right[i]).collect(),
            label: self.label,
            gap_report: self.gap_report.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_id_wire_round_trip() {
        assert_eq!(DeviceId::from_wire(1), Some(DeviceId::LeftWrist));
        assert_eq!(DeviceId::from_wire(2), Some(DeviceId::RightWrist));
        assert_eq!(DeviceId::from_wire(0), None);
        assert_eq!(DeviceId::from_wire(3), None);
        assert_eq!(DeviceId::LeftWrist.as_wire(), 1);
    }

    #[test]
    fn physical_conversion_is_linear_in_counts() {
        let f = SensorFrame {
            device_id: DeviceId::LeftWrist,
            seq: 0,
            timestamp_ms: 0,
            accel: [32767, -32768, 8192],
            gyro: [16384, 0, -16384],
            mag: [0, 0, 0],
        };
        let a = f.accel_g();
        assert!((a[0] - 4.0 * 32767.0 / 32768.0).abs() < 1e-12);
        assert!((a[1] + 4.0).abs() < 1e-12);
        assert!((a[2] - 1.0).abs() < 1e-12);
        let g = f.gyro_dps();
        assert!((g[0] - 1000.0).abs() < 1e-12);
        assert!((g[2] + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn from_physical_rejects_out_of_range() {
        let err = SensorFrame::from_physical(
            DeviceId::LeftWrist,
            0,
            0,
            [5.0, 0.0, 0.0], // beyond ±4 g
            [0.0; 3],
            [0.0; 3],
        )
        .unwrap_err();
        assert!(matches!(err, WireError::OutOfRange { field: "accel", .. }));
    }

    #[test]
    fn from_physical_round_trips_within_quantization() {
        let f = SensorFrame::from_physical(
            DeviceId::RightWrist,
            7,
            1230,
            [1.01, -0.2, 0.98],
            [140.5, -3.0, 12.0],
            [21.0, -4.0, -44.0],
        )
        .unwrap();
        let a = f.accel_g();
        // one LSB is fullscale/32768
        assert!((a[0] - 1.01).abs() <= ACCEL_FULLSCALE_G / 32768.0);
        let g = f.gyro_dps();
        assert!((g[0] - 140.5).abs() <= GYRO_FULLSCALE_DPS / 32768.0);
    }
}
