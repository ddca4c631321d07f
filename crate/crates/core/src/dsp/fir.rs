use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::odd_extend;
use crate::error::{Error, Result};

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub(crate) fn hamming(n: usize, len: usize) -> f64 {
    if len == 1 {
        return 1.0;
    }
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

/// Linear-phase Hamming-windowed sinc band-pass, normalized to unit gain at
/// the band center.
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    sample_rate: f64,
    num_taps: usize,
) -> Result<Vec<f64>> {
    let nyquist = sample_rate / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz) {
        return Err(Error::FilterDesign(format!(
            "band edges must satisfy 0 < low < high, got ({low_hz}, {high_hz})"
        )));
    }
    if high_hz >= nyquist {
        return Err(Error::FilterDesign(format!(
            "high cutoff {high_hz} Hz is not below Nyquist {nyquist} Hz"
        )));
    }
    if num_taps < 3 || num_taps.is_multiple_of(2) {
        return Err(Error::FilterDesign(format!(
            "num_taps must be odd and >= 3, got {num_taps}"
        )));
    }
    let fl = low_hz / sample_rate;
    let fh = high_hz / sample_rate;
    let mid = (num_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|n| {
            let m = n as f64 - mid;
            let ideal = 2.0 * fh * sinc(2.0 * fh * m) - 2.0 * fl * sinc(2.0 * fl * m);
            ideal * hamming(n, num_taps)
        })
        .collect();
    for n in 0..num_taps / 2 {
        taps[num_taps - 1 - n] = taps[n];
    }
    let center = fir_gain(&taps, 0.5 * (low_hz + high_hz), sample_rate);
    for t in &mut taps {
        *t /= center;
    }
    Ok(taps)
}

/// Magnitude of the FIR frequency response at `freq_hz`.
pub fn fir_gain(taps: &[f64], freq_hz: f64, sample_rate: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / sample_rate;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, &h)| {
            let a = w * n as f64;
            (re + h * a.cos(), im - h * a.sin())
        });
    re.hypot(im)
}

/// Filters `x` with symmetric `taps`, compensating the (len-1)/2 group delay
/// so the output is aligned with the input. Edges use odd reflection.
pub fn fir_zero_phase(x: &[f64], taps: &[f64]) -> Result<Vec<f64>> {
    let k = taps.len();
    if k.is_multiple_of(2) {
        return Err(Error::FilterDesign(
            "zero-phase FIR needs an odd tap count".into(),
        ));
    }
    if x.len() < k {
        return Err(Error::FilterDesign(format!(
            "signal of {} samples is shorter than the {k}-tap filter",
            x.len()
        )));
    }
    let half = (k - 1) / 2;
    let padded = odd_extend(x, half);
    if k <= 64 {
        Ok(correlate_direct(&padded, taps))
    } else {
        Ok(correlate_fft(&padded, taps))
    }
}

/// `y[i] = sum_k taps[k] * x[i + k]` over the valid range.
fn correlate_direct(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let n_out = x.len() + 1 - taps.len();
    (0..n_out)
        .map(|i| {
            x[i..i + taps.len()]
                .iter()
                .zip(taps)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Overlap-save version of [`correlate_direct`].
fn correlate_fft(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let n_out = x.len() + 1 - k;
    let nfft = (4 * k).max(4096).next_power_of_two();
    let step = nfft - k + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(nfft);
    let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(nfft);

    // Correlation with taps == convolution with the reversed taps.
    let mut kernel: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); nfft];
    for (i, &t) in taps.iter().rev().enumerate() {
        kernel[i].re = t;
    }
    fwd.process(&mut kernel);

    let scale = 1.0 / nfft as f64;
    let mut out = Vec::with_capacity(n_out);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start < n_out {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(x.get(start + i).copied().unwrap_or(0.0), 0.0);
        }
        fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&kernel) {
            *b *= h;
        }
        inv.process(&mut buf);
        let take = step.min(n_out - start);
        out.extend(buf[k - 1..k - 1 + take].iter().map(|c| c.re * scale));
        start += step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(g: f64) -> f64 {
        20.0 * g.log10()
    }

    #[test]
    fn taps_are_symmetric() {
        let h = design_bandpass(1.0, 60.0, 500.0, 2001).unwrap();
        for k in 0..h.len() {
            assert_eq!(h[k], h[h.len() - 1 - k]);
        }
    }

    #[test]
    fn design_meets_band_edges() {
        let h = design_bandpass(1.0, 60.0, 500.0, 2001).unwrap();
        assert!(db(fir_gain(&h, 30.0, 500.0)).abs() <= 1.0);
        assert!(db(fir_gain(&h, 0.0, 500.0)) <= -20.0);
        assert!(db(fir_gain(&h, 63.0, 500.0)) <= -40.0);
    }

    #[test]
    fn cutoff_at_nyquist_is_rejected() {
        assert!(design_bandpass(1.0, 250.0, 500.0, 101).is_err());
        assert!(design_bandpass(1.0, 60.0, 500.0, 100).is_err());
    }

    #[test]
    fn fft_path_matches_direct_path() {
        let taps = design_bandpass(2.0, 40.0, 250.0, 301).unwrap();
        let x: Vec<f64> = (0..9000)
            .map(|i| ((i * 37 % 101) as f64 - 50.0) * 0.1)
            .collect();
        let a = correlate_direct(&x, &taps);
        let b = correlate_fft(&x, &taps);
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn too_short_signal() {
        let taps = design_bandpass(1.0, 60.0, 500.0, 101).unwrap();
        assert!(fir_zero_phase(&[0.0; 50], &taps).is_err());
    }
}
