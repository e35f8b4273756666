//! Portable on-disk form of an assembled session.
//!
//! Layout: one `#gaitlab-session` metadata line, one column-name line, then
//! one row per sample with 19 numeric fields. Values are written in
//! scientific notation with five fractional digits, so a round trip
//! reproduces each value to about 1e-6 relative error. Gap records are not
//! carried; short gaps were already interpolated during assembly.

use super::{Label, Session, Task, WristSample};
use thiserror::Error;

const FORMAT_TAG: &str = "#gaitlab-session,v1";

const COLUMNS: [&str; 19] = [
    "t_ms", "ax_left", "ay_left", "az_left", "gx_left", "gy_left", "gz_left", "mx_left",
    "my_left", "mz_left", "ax_right", "ay_right", "az_right", "gx_right", "gy_right", "gz_right",
    "mx_right", "my_right", "mz_right",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionCsvError {
    #[error("malformed session header: {0}")]
    BadHeader(String),
    #[error("column {0:?} missing or out of place")]
    SchemaMismatch(String),
    #[error("unparseable value at line {line}, column {column:?}")]
    BadValue { line: usize, column: String },
    #[error("no sample rows")]
    EmptyChannel,
}

/// Render a session as CSV text.
pub fn session_to_csv(session: &Session) -> String {
    let label = match session.label {
        Some(l) => (l.as_u8()).to_string(),
        None => "?".to_string(),
    };
    let mut out = String::with_capacity(session.len() * 220 + 256);
    out.push_str(&format!(
        "{FORMAT_TAG},subject={},task={},rate_hz={},label={}\n",
        session.subject_id,
        session.task,
        session.sample_rate_hz.round() as i64,
        label
    ));
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for i in 0..session.len() {
        push_row(&mut out, session.t_ms[i], &session.left[i], &session.right[i]);
    }
    out
}

fn push_row(out: &mut String, t: f64, l: &WristSample, r: &WristSample) {
    use std::fmt::Write;
    write!(out, "{t:.5e}").unwrap();
    for s in [l, r] {
        for axes in [&s.accel, &s.gyro, &s.mag] {
            for v in axes {
                write!(out, ",{v:.5e}").unwrap();
            }
        }
    }
    out.push('\n');
}

/// Parse CSV text produced by [`session_to_csv`].
///
/// Leading `# `-prefixed annotation lines (tool provenance headers) are
/// skipped; the format tag itself starts with `#` but no space, so it stays
/// unambiguous.
pub fn session_from_csv(text: &str) -> Result<Session, SessionCsvError> {
    let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.starts_with("# "));

    let (_, meta_line) = lines
        .next()
        .ok_or_else(|| SessionCsvError::BadHeader("empty input".into()))?;
    let (subject_id, task, sample_rate_hz, label) = parse_meta(meta_line)?;

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| SessionCsvError::BadHeader("missing column line".into()))?;
    let names: Vec<&str> = header_line.split(',').map(str::trim).collect();
    for (i, expected) in COLUMNS.iter().enumerate() {
        if names.get(i).copied() != Some(*expected) {
            return Err(SessionCsvError::SchemaMismatch((*expected).to_string()));
        }
    }
    if names.len() != COLUMNS.len() {
        return Err(SessionCsvError::SchemaMismatch(names[COLUMNS.len()].to_string()));
    }

    let mut t_ms = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut vals = [0f64; 19];
        let mut fields = line.split(',');
        for (ci, slot) in vals.iter_mut().enumerate() {
            let field = fields.next().ok_or_else(|| SessionCsvError::BadValue {
                line: lineno + 1,
                column: COLUMNS[ci].to_string(),
            })?;
            *slot = field.trim().parse().map_err(|_| SessionCsvError::BadValue {
                line: lineno + 1,
                column: COLUMNS[ci].to_string(),
            })?;
        }
        t_ms.push(vals[0]);
        left.push(sample_from(&vals[1..10]));
        right.push(sample_from(&vals[10..19]));
    }
    if t_ms.is_empty() {
        return Err(SessionCsvError::EmptyChannel);
    }

    Ok(Session {
        subject_id,
        task,
        sample_rate_hz,
        t_ms,
        left,
        right,
        label,
        gap_report: Vec::new(),
    })
}

fn sample_from(v: &[f64]) -> WristSample {
    WristSample {
        accel: [v[0], v[1], v[2]],
        gyro: [v[3], v[4], v[5]],
        mag: [v[6], v[7], v[8]],
    }
}

fn parse_meta(line: &str) -> Result<(String, Task, f64, Option<Label>), SessionCsvError> {
    let bad = |msg: &str| SessionCsvError::BadHeader(msg.to_string());
    let rest = line
        .strip_prefix(FORMAT_TAG)
        .ok_or_else(|| bad("missing #gaitlab-session,v1 tag"))?;

    let mut subject = None;
    let mut task = None;
    let mut rate = None;
    let mut label = None;
    for pair in rest.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| bad(&format!("malformed pair {pair:?}")))?;
        match key.trim() {
            "subject" => subject = Some(value.trim().to_string()),
            "task" => {
                task = Some(Task::from_str(value.trim()).ok_or_else(|| bad("unknown task"))?)
            }
            "rate_hz" => {
                rate = Some(
                    value
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| bad("rate_hz not numeric"))?,
                )
            }
            "label" => {
                label = Some(match value.trim() {
                    "?" => None,
                    "0" => Some(Label::Control),
                    "1" => Some(Label::Pd),
                    _ => return Err(bad("label must be 0, 1, or ?")),
                })
            }
            other => return Err(bad(&format!("unknown header key {other:?}"))),
        }
    }
    Ok((
        subject.ok_or_else(|| bad("missing subject"))?,
        task.ok_or_else(|| bad("missing task"))?,
        rate.ok_or_else(|| bad("missing rate_hz"))?,
        label.ok_or_else(|| bad("missing label"))?,
    ))
}
