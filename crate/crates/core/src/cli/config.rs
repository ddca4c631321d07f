use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_io::SyntheticSpec;
use crate::dsp::FilterSpec;
use crate::error::{Error, Result};
use crate::training::TrainProtocol;

/// Everything a run needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainProtocol,
    #[serde(default)]
    pub postproc: PostprocConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either EDF recordings with CSV annotations or a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// EDF files; relative paths resolve against the config file's directory.
    #[serde(default)]
    pub edf: Vec<PathBuf>,
    /// Annotation CSVs paired with `edf`; defaults to each EDF path with a
    /// `.csv` extension.
    #[serde(default)]
    pub annotations: Vec<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Resample to this rate first; `None` keeps the native rate.
    pub target_rate: Option<f64>,
    pub filters: Vec<FilterSpec>,
    /// Filter at the native rate before resampling instead of after.
    pub filter_before_resample: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_rate: None,
            filters: vec![
                FilterSpec::BandpassFir {
                    low_hz: 1.0,
                    high_hz: 60.0,
                    num_taps: 1025,
                },
                FilterSpec::NotchIir {
                    center_hz: 50.0,
                    q_factor: 35.0,
                },
            ],
            filter_before_resample: false,
        }
    }
}

/// Model hyperparameters; channel count and sample rate come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub window_sec: f64,
    pub resolutions: Vec<f64>,
    #[serde(default = "default_feature_width")]
    pub feature_width: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
}

fn default_feature_width() -> usize {
    32
}

fn default_slope() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// The K-dimensional feature vectors the model emits.
    Features,
    /// Per-channel standard deviation, line length and peak amplitude.
    RawStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Session,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocConfig {
    pub enabled: bool,
    pub representation: Representation,
    /// Population over which anomaly scores and their mean are computed.
    pub scope: Scope,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        PostprocConfig {
            enabled: true,
            representation: Representation::Features,
            scope: Scope::Session,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub export_scores: bool,
    pub export_features: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("mrwave-out"),
            export_scores: true,
            export_features: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads `path`; relative dataset paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in config
            .dataset
            .edf
            .iter_mut()
            .chain(config.dataset.annotations.iter_mut())
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        let ds = &self.dataset;
        match (&ds.synthetic, ds.edf.is_empty()) {
            (Some(spec), true) => spec.validate()?,
            (None, false) => {
                if !ds.annotations.is_empty() && ds.annotations.len() != ds.edf.len() {
                    return Err(Error::config(format!(
                        "{} annotation files listed for {} EDF files",
                        ds.annotations.len(),
                        ds.edf.len()
                    )));
                }
            }
            (Some(_), false) => {
                return Err(Error::config(
                    "dataset lists both EDF files and a synthetic spec",
                ))
            }
            (None, true) => {
                return Err(Error::config("dataset needs EDF files or a synthetic spec"))
            }
        }
        if let Some(rate) = self.preprocess.target_rate {
            if !(rate > 0.0) {
                return Err(Error::config(format!(
                    "target_rate must be positive, got {rate}"
                )));
            }
        }
        self.training.validate()?;
        if self.model.resolutions.is_empty() {
            return Err(Error::config("model.resolutions is empty"));
        }
        Ok(())
    }

    /// `(edf, annotation)` path pairs.
    pub fn recording_paths(&self) -> Vec<(PathBuf, PathBuf)> {
        self.dataset
            .edf
            .iter()
            .enumerate()
            .map(|(i, edf)| {
                let ann = self
                    .dataset
                    .annotations
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| edf.with_extension("csv"));
                (edf.clone(), ann)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 3

[dataset.synthetic]
n_patients = 4
duration_sec = 600.0
seizure_count = 2
seizure_len_sec = [20.0, 40.0]
noise_amplitude = 1.0
burst_frequency = 5.0
seed = 1
sample_rate = 200.0
n_channels = 4

[preprocess]
target_rate = 200.0
filters = [
  { kind = "bandpass_fir", low_hz = 1.0, high_hz = 60.0, num_taps = 401 },
  { kind = "notch_iir", center_hz = 50.0, q_factor = 35.0 },
]

[model]
window_sec = 5.0
resolutions = [5.0, 2.5]

[training]
max_epochs = 10
runs_per_patient = 1

[postproc]
scope = "patient"
"#;

    #[test]
    fn parses_example() {
        let c = RunConfig::from_toml(EXAMPLE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.training.max_epochs, 10);
        assert_eq!(c.postproc.scope, Scope::Patient);
        assert_eq!(c.preprocess.filters.len(), 2);
        assert_eq!(c.model.feature_width, 32);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = EXAMPLE.replace("max_epochs = 10", "max_epoch = 10");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn needs_a_dataset() {
        let c = RunConfig::from_toml("[dataset]\n[model]\nwindow_sec = 5.0\nresolutions = [5.0]\n")
            .unwrap();
        assert!(c.validate().is_err());
    }
}
