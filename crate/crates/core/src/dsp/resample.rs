use super::fir::hamming;
use crate::data_io::Recording;
use crate::error::{Error, Result};

const MAX_DENOMINATOR: u64 = 10_000;
/// Kernel half-length in units of the larger of the up/down factors.
const HALF_LEN_FACTOR: usize = 10;

/// Reduced `(up, down)` with `up / down == target / source`, found by
/// continued fractions. Fails when the denominator would exceed 10000.
pub fn rational_ratio(source_hz: f64, target_hz: f64) -> Result<(usize, usize)> {
    if !(source_hz > 0.0 && target_hz > 0.0) {
        return Err(Error::config(format!(
            "sample rates must be positive, got {source_hz} -> {target_hz}"
        )));
    }
    let r = target_hz / source_hz;
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = r;
    for _ in 0..64 {
        let a = x.floor();
        let ai = a as u64;
        let (p2, q2) = (ai * p1 + p0, ai * q1 + q0);
        if q2 > MAX_DENOMINATOR {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if ((p1 as f64 / q1 as f64) - r).abs() <= 1e-12 * r {
            return Ok((p1 as usize, q1 as usize));
        }
        let frac = x - a;
        if frac < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    if q1 > 0 && ((p1 as f64 / q1 as f64) - r).abs() <= 1e-12 * r {
        return Ok((p1 as usize, q1 as usize));
    }
    Err(Error::config(format!(
        "resampling ratio {target_hz}/{source_hz} needs a denominator above {MAX_DENOMINATOR}"
    )))
}

/// Polyphase resampling of one channel by `up / down`; output length is
/// `round(len * up / down)`.
pub fn resample_channel(x: &[f64], up: usize, down: usize) -> Vec<f64> {
    if up == down {
        return x.to_vec();
    }
    let max_rate = up.max(down);
    let half = HALF_LEN_FACTOR * max_rate;
    let len = 2 * half + 1;
    let fc = 0.5 / max_rate as f64;
    let mut kernel: Vec<f64> = (0..len)
        .map(|n| {
            let m = n as f64 - half as f64;
            let s = if m == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * 2.0 * fc * m).sin() / (std::f64::consts::PI * 2.0 * fc * m)
            };
            up as f64 * 2.0 * fc * s * hamming(n, len)
        })
        .collect();
    // Each polyphase branch gets exact unit DC gain.
    for phase in 0..up {
        let sum: f64 = kernel.iter().skip(phase).step_by(up).sum();
        if sum.abs() > 1e-12 {
            kernel
                .iter_mut()
                .skip(phase)
                .step_by(up)
                .for_each(|k| *k /= sum);
        }
    }

    let n_in = x.len() as i64;
    let n_out = ((x.len() * up) as f64 / down as f64).round() as usize;
    let (up_i, down_i, half_i, len_i) = (up as i64, down as i64, half as i64, len as i64);
    (0..n_out as i64)
        .map(|j| {
            // Upsampled-domain position of output j, shifted by the kernel delay.
            let t = j * down_i + half_i;
            let i_max = (t / up_i).min(n_in - 1);
            let i_min = ((t - (len_i - 1) + up_i - 1).div_euclid(up_i)).max(0);
            let mut acc = 0.0;
            let mut i = i_min;
            while i <= i_max {
                acc += x[i as usize] * kernel[(t - i * up_i) as usize];
                i += 1;
            }
            acc
        })
        .collect()
}

/// Resamples every channel to `target_hz` with an anti-aliasing polyphase filter.
pub fn resample(recording: &Recording, target_hz: f64) -> Result<Recording> {
    recording.validate()?;
    if !(target_hz > 0.0) {
        return Err(Error::config(format!(
            "target rate must be positive, got {target_hz}"
        )));
    }
    if (recording.sample_rate - target_hz).abs() < 1e-9 {
        return Ok(recording.clone());
    }
    let (up, down) = rational_ratio(recording.sample_rate, target_hz)?;
    let samples = recording
        .samples
        .iter()
        .map(|row| resample_channel(row, up, down))
        .collect();
    Ok(recording.with_samples(target_hz, samples))
}
