use serde::{Deserialize, Serialize};

use crate::dsp::segment::window_samples;
use crate::error::{Error, Result};

/// Width of every spatio-temporal block and of the predictor's middle layer.
pub const BLOCK_WIDTH: usize = 32;
/// Hidden width of the feature head and the predictor's first layer.
pub const HIDDEN_WIDTH: usize = 64;
/// Number of cascaded stride-2 temporal convolutions.
pub const N_SCALES: usize = 6;
/// Scales 2..=6 feed the spatio-temporal blocks; the first is skipped.
pub const N_BLOCKS: usize = N_SCALES - 1;
/// Shortest deepest-scale length that survives two kernel-4 convolutions.
pub const MIN_DEEPEST_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub window_sec: f64,
    /// Sub-segment lengths in seconds, strictly descending, first equal to the window.
    pub resolutions: Vec<f64>,
    #[serde(default = "default_feature_width")]
    pub feature_width: usize,
    pub channels: usize,
    pub sample_rate: f64,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
}

fn default_feature_width() -> usize {
    32
}

fn default_leaky_slope() -> f64 {
    0.01
}

impl ModelConfig {
    pub fn new(window_sec: f64, resolutions: Vec<f64>, channels: usize, sample_rate: f64) -> Self {
        ModelConfig {
            window_sec,
            resolutions,
            feature_width: default_feature_width(),
            channels,
            sample_rate,
            leaky_slope: default_leaky_slope(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("model needs at least one channel"));
        }
        if self.feature_width == 0 {
            return Err(Error::config("feature_width must be at least 1"));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::config(format!(
                "invalid leaky slope {}",
                self.leaky_slope
            )));
        }
        let first = *self
            .resolutions
            .first()
            .ok_or_else(|| Error::config("resolution list is empty"))?;
        if (first - self.window_sec).abs() > 1e-9 {
            return Err(Error::config(format!(
                "largest resolution {first} s must equal the window {} s",
                self.window_sec
            )));
        }
        window_samples(self.window_sec, self.sample_rate)?;
        for pair in self.resolutions.windows(2) {
            if pair[1] >= pair[0] {
                return Err(Error::config(format!(
                    "resolutions must be strictly descending, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for &d in &self.resolutions {
            if !(d > 0.0) {
                return Err(Error::config(format!("resolution {d} s is not positive")));
            }
            let n = window_samples(d, self.sample_rate)?;
            if n >> N_SCALES < MIN_DEEPEST_LEN {
                return Err(Error::config(format!(
                    "resolution {d} s gives {n} samples; the deepest scale needs at least {MIN_DEEPEST_LEN} (d * fs >= {})",
                    MIN_DEEPEST_LEN << N_SCALES
                )));
            }
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        window_samples(self.window_sec, self.sample_rate).expect("validated config")
    }

    pub fn sub_len(&self, d: f64) -> usize {
        window_samples(d, self.sample_rate).expect("validated config")
    }

    /// Number of contiguous sub-segments of length `d` in one window.
    pub fn sub_count(&self, d: f64) -> usize {
        (self.window_sec / d + 1e-9).floor() as usize
    }
}

/// Concatenated feature length `K = sum over d of F * floor(W / d)`.
pub fn feature_length(config: &ModelConfig) -> usize {
    config
        .resolutions
        .iter()
        .map(|&d| config.feature_width * config.sub_count(d))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_lengths() {
        assert_eq!(
            feature_length(&ModelConfig::new(10.0, vec![10.0, 2.0], 19, 500.0)),
            192
        );
        assert_eq!(
            feature_length(&ModelConfig::new(10.0, vec![10.0, 5.0, 2.0], 19, 500.0)),
            256
        );
        assert_eq!(
            feature_length(&ModelConfig::new(10.0, vec![10.0], 19, 500.0)),
            32
        );
        // 10 / 3 leaves a remainder that is dropped.
        assert_eq!(
            feature_length(&ModelConfig::new(10.0, vec![10.0, 3.0], 19, 500.0)),
            128
        );
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::new(10.0, vec![10.0, 2.0], 19, 500.0)
            .validate()
            .is_ok());
        assert!(ModelConfig::new(5.0, vec![5.0, 2.5], 4, 200.0)
            .validate()
            .is_ok());
        assert!(ModelConfig::new(10.0, vec![5.0, 2.0], 19, 500.0)
            .validate()
            .is_err());
        assert!(ModelConfig::new(10.0, vec![10.0, 2.0, 5.0], 19, 500.0)
            .validate()
            .is_err());
        assert!(ModelConfig::new(10.0, vec![10.0, 0.5], 19, 500.0)
            .validate()
            .is_err());
        assert!(ModelConfig::new(10.0, vec![], 19, 500.0)
            .validate()
            .is_err());
        assert!(ModelConfig::new(5.0, vec![5.0, 2.5], 4, 150.0)
            .validate()
            .is_err());
    }
}
