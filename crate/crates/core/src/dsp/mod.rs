//! Preprocessing: band-pass and notch filtering, rational resampling and
//! fixed-window segmentation.

mod fir;
mod iir;
mod resample;
pub(crate) mod segment;

pub use fir::{design_bandpass, fir_gain, fir_zero_phase};
pub use iir::{design_notch, filtfilt, Biquad};
pub use resample::{rational_ratio, resample, resample_channel};
pub use segment::{label_window, segment_at, segmentize, Segment};

use serde::{Deserialize, Serialize};

use crate::data_io::Recording;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    BandpassFir {
        low_hz: f64,
        high_hz: f64,
        num_taps: usize,
    },
    NotchIir {
        center_hz: f64,
        q_factor: f64,
    },
}

impl FilterSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        match *self {
            FilterSpec::BandpassFir {
                low_hz,
                high_hz,
                num_taps,
            } => {
                if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
                    return Err(Error::FilterDesign(format!(
                        "band-pass needs 0 < low ({low_hz}) < high ({high_hz}) < Nyquist ({nyquist})"
                    )));
                }
                if num_taps < 3 || num_taps % 2 == 0 {
                    return Err(Error::FilterDesign(format!(
                        "num_taps must be odd and >= 3, got {num_taps}"
                    )));
                }
            }
            FilterSpec::NotchIir {
                center_hz,
                q_factor,
            } => {
                if !(center_hz > 0.0 && center_hz < nyquist) {
                    return Err(Error::FilterDesign(format!(
                        "notch center {center_hz} Hz must lie in (0, {nyquist})"
                    )));
                }
                if !(q_factor > 0.0) {
                    return Err(Error::FilterDesign(format!(
                        "q_factor must be positive, got {q_factor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Applies `filters` in order without phase distortion: FIR filters are
/// delay-compensated, IIR filters run forward and backward.
pub fn apply_zero_phase(recording: &Recording, filters: &[FilterSpec]) -> Result<Recording> {
    recording.validate()?;
    let fs = recording.sample_rate;
    let mut samples = recording.samples.clone();
    for spec in filters {
        spec.validate(fs)?;
        match *spec {
            FilterSpec::BandpassFir {
                low_hz,
                high_hz,
                num_taps,
            } => {
                let taps = design_bandpass(low_hz, high_hz, fs, num_taps)?;
                for row in &mut samples {
                    *row = fir_zero_phase(row, &taps)?;
                }
            }
            FilterSpec::NotchIir {
                center_hz,
                q_factor,
            } => {
                let bq = design_notch(center_hz, q_factor, fs)?;
                let pad = iir::notch_padlen(center_hz, q_factor, fs);
                for row in &mut samples {
                    *row = filtfilt(&bq, row, pad)?;
                }
            }
        }
    }
    Ok(recording.with_samples(fs, samples))
}

/// Odd (point-symmetric) extension of `x` by `pad` samples on each side.
pub(crate) fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    debug_assert!(pad < n);
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(2.0 * x[0] - x[i]);
    }
    out.extend_from_slice(x);
    for i in 1..=pad {
        out.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    out
}
