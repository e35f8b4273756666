//! One-sided power spectrum and band summaries.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Hann-windowed periodogram. Returns (frequency, power) pairs for the
/// one-sided spectrum, DC through Nyquist. The input is demeaned first, so
/// the DC bin is essentially empty.
pub fn periodogram(x: &[f64], rate_hz: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    if n < 2 {
        return (Vec::new(), Vec::new());
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5
                - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let scale = 1.0 / n as f64;
    let freqs = (0..=half).map(|k| k as f64 * rate_hz / n as f64).collect();
    let power = buf[..=half].iter().map(|c| c.norm_sqr() * scale).collect();
    (freqs, power)
}

/// Frequency of the strongest bin inside `[lo_hz, hi_hz]`; 0 when no bin
/// falls in the window.
pub fn dominant_frequency(freqs: &[f64], power: &[f64], lo_hz: f64, hi_hz: f64) -> f64 {
    freqs
        .iter()
        .zip(power)
        .filter(|(f, _)| (lo_hz..=hi_hz).contains(*f))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(f, _)| *f)
        .unwrap_or(0.0)
}

/// Fraction of total power inside `[lo_hz, hi_hz]`; 0 for an empty spectrum.
pub fn band_power_ratio(freqs: &[f64], power: &[f64], lo_hz: f64, hi_hz: f64) -> f64 {
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let band: f64 = freqs
        .iter()
        .zip(power)
        .filter(|(f, _)| (lo_hz..=hi_hz).contains(*f))
        .map(|(_, p)| p)
        .sum();
    band / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn tone(freq: f64, amp: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (TAU * freq * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn finds_pure_tone() {
        let x = tone(2.0, 1.0, 100.0, 4000);
        let (f, p) = periodogram(&x, 100.0);
        let dom = dominant_frequency(&f, &p, 0.5, 10.0);
        assert!((dom - 2.0).abs() < 0.05, "dominant {dom}");
    }

    #[test]
    fn stronger_tone_wins() {
        let n = 4000;
        let x: Vec<f64> = tone(1.2, 0.5, 100.0, n)
            .iter()
            .zip(tone(2.6, 2.0, 100.0, n))
            .map(|(a, b)| a + b)
            .collect();
        let (f, p) = periodogram(&x, 100.0);
        assert!((dominant_frequency(&f, &p, 0.5, 10.0) - 2.6).abs() < 0.05);
    }

    #[test]
    fn window_limits_search() {
        let n = 4000;
        let x: Vec<f64> = tone(1.2, 0.5, 100.0, n)
            .iter()
            .zip(tone(8.0, 2.0, 100.0, n))
            .map(|(a, b)| a + b)
            .collect();
        let (f, p) = periodogram(&x, 100.0);
        assert!((dominant_frequency(&f, &p, 0.5, 3.5) - 1.2).abs() < 0.05);
    }

    #[test]
    fn band_ratio_concentrates_on_tone() {
        let x = tone(2.0, 1.0, 100.0, 4000);
        let (f, p) = periodogram(&x, 100.0);
        assert!(band_power_ratio(&f, &p, 0.5, 3.0) > 0.98);
        assert!(band_power_ratio(&f, &p, 5.0, 10.0) < 0.02);
    }

    #[test]
    fn constant_signal_has_no_power() {
        let (f, p) = periodogram(&vec![3.3; 1000], 100.0);
        assert!(band_power_ratio(&f, &p, 0.0, 50.0) == 0.0 || p.iter().sum::<f64>() < 1e-18);
        assert_eq!(f.len(), 501);
    }

    #[test]
    fn parseval_within_window_loss() {
        // Hann window keeps 3/8 of the energy; spectrum total must match.
        let x = tone(3.0, 1.0, 100.0, 2000);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let (_, p) = periodogram(&x, 100.0);
        // one-sided spectrum double-counts interior bins relative to the
        // full FFT; this tone sits nowhere near DC or Nyquist
        let total: f64 = p.iter().sum();
        let expected = 0.375 * energy / 2.0;
        assert!(
            (total - expected).abs() / expected < 0.01,
            "total {total} expected {expected}"
        );
    }
}
