//! Second-order IIR filtering for gait band isolation.
//!
//! Coefficients follow the audio-cookbook bilinear-transform design with
//! Q = 1/sqrt(2), which makes a single biquad maximally flat in the passband.
//! Offline filtering runs forward and backward (`filtfilt`) so step timing is
//! not shifted by filter group delay.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({nyquist_hz} Hz)")]
    BadCutoff { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("sample rate {0} Hz is not positive")]
    BadSampleRate(f64),
    #[error("band edges {lo_hz}..{hi_hz} Hz are not ordered")]
    BadBand { lo_hz: f64, hi_hz: f64 },
}

/// Normalized transfer function
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

const Q: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl Biquad {
    pub fn lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Biquad, FilterError> {
        let (sin_w, cos_w) = check_cutoff(cutoff_hz, sample_rate_hz)?;
        let alpha = sin_w / (2.0 * Q);
        let a0 = 1.0 + alpha;
        Ok(Biquad {
            b0: (1.0 - cos_w) / 2.0 / a0,
            b1: (1.0 - cos_w) / a0,
            b2: (1.0 - cos_w) / 2.0 / a0,
            a1: -2.0 * cos_w / a0,
            a2: (1.0 - alpha) / a0,
        })
    }

    pub fn highpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Biquad, FilterError> {
        let (sin_w, cos_w) = check_cutoff(cutoff_hz, sample_rate_hz)?;
        let alpha = sin_w / (2.0 * Q);
        let a0 = 1.0 + alpha;
        Ok(Biquad {
            b0: (1.0 + cos_w) / 2.0 / a0,
            b1: -(1.0 + cos_w) / a0,
            b2: (1.0 + cos_w) / 2.0 / a0,
            a1: -2.0 * cos_w / a0,
            a2: (1.0 - alpha) / a0,
        })
    }

    /// Gain for a constant input.
    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// One causal pass. State starts at the steady-state response to the
    /// first sample, so a constant signal passes through with no transient.
    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let mut x1 = x[0];
        let mut x2 = x[0];
        let mut y1 = x[0] * self.dc_gain();
        let mut y2 = y1;
        let mut out = Vec::with_capacity(x.len());
        for &xi in x {
            let yi = self.b0 * xi + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
            x2 = x1;
            x1 = xi;
            y2 = y1;
            y1 = yi;
            out.push(yi);
        }
        out
    }

    /// Forward-backward pass: zero phase, squared magnitude response.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.run(x);
        y.reverse();
        let mut z = self.run(&y);
        z.reverse();
        z
    }
}

fn check_cutoff(cutoff_hz: f64, sample_rate_hz: f64) -> Result<(f64, f64), FilterError> {
    if !(sample_rate_hz > 0.0) {
        return Err(FilterError::BadSampleRate(sample_rate_hz));
    }
    let nyquist_hz = sample_rate_hz / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist_hz) {
        return Err(FilterError::BadCutoff { cutoff_hz, nyquist_hz });
    }
    let w = 2.0 * std::f64::consts::PI * cutoff_hz / sample_rate_hz;
    Ok((w.sin(), w.cos()))
}

/// Zero-phase lowpass.
pub fn lowpass_filtfilt(x: &[f64], cutoff_hz: f64, sample_rate_hz: f64) -> Result<Vec<f64>, FilterError> {
    Ok(Biquad::lowpass(cutoff_hz, sample_rate_hz)?.filtfilt(x))
}

/// Zero-phase highpass.
pub fn highpass_filtfilt(x: &[f64], cutoff_hz: f64, sample_rate_hz: f64) -> Result<Vec<f64>, FilterError> {
    Ok(Biquad::highpass(cutoff_hz, sample_rate_hz)?.filtfilt(x))
}

/// Zero-phase bandpass as highpass at `lo_hz` followed by lowpass at `hi_hz`.
pub fn bandpass_filtfilt(
    x: &[f64],
    lo_hz: f64,
    hi_hz: f64,
    sample_rate_hz: f64,
) -> Result<Vec<f64>, FilterError> {
    if lo_hz >= hi_hz {
        return Err(FilterError::BadBand { lo_hz, hi_hz });
    }
    let hp = Biquad::highpass(lo_hz, sample_rate_hz)?;
    let lp = Biquad::lowpass(hi_hz, sample_rate_hz)?;
    Ok(lp.filtfilt(&hp.filtfilt(x)))
}
