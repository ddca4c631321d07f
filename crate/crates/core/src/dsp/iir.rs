use std::f64::consts::PI;

use super::odd_extend;
use crate::error::{Error, Result};

/// Second-order section `b0 + b1 z^-1 + b2 z^-2 / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// |H(e^{jw})| at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            re.hypot(im)
        };
        eval(&self.b) / eval(&self.a)
    }

    /// Direct form II transposed with initial state `zi`.
    pub fn filter(&self, x: &[f64], zi: [f64; 2]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut z0, mut z1) = (zi[0], zi[1]);
        x.iter()
            .map(|&xi| {
                let y = b0 * xi + z0;
                z0 = b1 * xi - a1 * y + z1;
                z1 = b2 * xi - a2 * y;
                y
            })
            .collect()
    }

    /// State that makes the step response start in steady state.
    pub fn steady_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let r0 = b1 - a1 * b0;
        let r1 = b2 - a2 * b0;
        let z0 = (r0 + r1) / (1.0 + a1 + a2);
        [z0, r1 - a2 * z0]
    }
}

/// Second-order IIR notch at `center_hz` with quality factor `q_factor`.
pub fn design_notch(center_hz: f64, q_factor: f64, sample_rate: f64) -> Result<Biquad> {
    if !(center_hz > 0.0 && center_hz < sample_rate / 2.0) {
        return Err(Error::FilterDesign(format!(
            "notch center {center_hz} Hz must lie in (0, {})",
            sample_rate / 2.0
        )));
    }
    if !(q_factor > 0.0) {
        return Err(Error::FilterDesign(format!(
            "q_factor must be positive, got {q_factor}"
        )));
    }
    let w0 = 2.0 * PI * center_hz / sample_rate;
    let bw = w0 / q_factor;
    let g = 1.0 / (1.0 + (bw / 2.0).tan());
    let c = w0.cos();
    Ok(Biquad {
        b: [g, -2.0 * g * c, g],
        a: [1.0, -2.0 * g * c, 2.0 * g - 1.0],
    })
}

/// Padding long enough for the notch ringing (time constant ~ q / (pi f0))
/// to decay by e^-6 before reaching the signal.
pub(crate) fn notch_padlen(center_hz: f64, q_factor: f64, sample_rate: f64) -> usize {
    (6.0 * sample_rate * q_factor / (PI * center_hz)).ceil() as usize
}

/// Forward-backward filtering with odd extension of `padlen` samples
/// (clipped to the signal length).
pub fn filtfilt(bq: &Biquad, x: &[f64], padlen: usize) -> Result<Vec<f64>> {
    if x.len() < 7 {
        return Err(Error::FilterDesign(format!(
            "signal of {} samples is too short for forward-backward filtering",
            x.len()
        )));
    }
    let pad = padlen.min(x.len() - 1);
    let ext = odd_extend(x, pad);
    let zi = bq.steady_state();
    let fwd = bq.filter(&ext, [zi[0] * ext[0], zi[1] * ext[0]]);
    let rev: Vec<f64> = fwd.into_iter().rev().collect();
    let back = bq.filter(&rev, [zi[0] * rev[0], zi[1] * rev[0]]);
    let mut y: Vec<f64> = back.into_iter().rev().collect();
    y.truncate(pad + x.len());
    y.drain(..pad);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(g: f64) -> f64 {
        20.0 * g.log10()
    }

    #[test]
    fn notch_response() {
        let bq = design_notch(50.0, 35.0, 500.0).unwrap();
        assert!(db(bq.gain(50.0, 500.0)) <= -25.0);
        assert!((bq.gain(0.0, 500.0) - 1.0).abs() < 1e-6);
        assert!(db(bq.gain(45.0, 500.0)) >= -1.0);
        let off = 5.0 * 50.0 / 35.0;
        assert!(db(bq.gain(50.0 - off, 500.0)).abs() <= 1.0);
        assert!(db(bq.gain(50.0 + off, 500.0)).abs() <= 1.0);
    }

    #[test]
    fn steady_state_holds_constant_input() {
        let bq = design_notch(50.0, 35.0, 500.0).unwrap();
        let zi = bq.steady_state();
        let y = bq.filter(&[3.0; 50], [3.0 * zi[0], 3.0 * zi[1]]);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn rejects_center_above_nyquist() {
        assert!(design_notch(300.0, 35.0, 500.0).is_err());
    }
}
