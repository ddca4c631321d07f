//! Recording and annotation types plus the EDF, CSV and synthetic sources
//! that produce them.

mod annotations;
mod edf;
mod synthetic;

pub use annotations::{read_annotations, write_annotations, AnnotationSet, Interval};
pub use edf::{read_edf, write_edf, EdfFile, EdfHeader, EdfSignalHeader};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::collections::HashSet;

use crate::error::{Error, Result};

/// The 19 monopolar 10-20 channels used for scalp seizure detection.
pub const STANDARD_CHANNELS: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F8", "F3", "F4", "T3", "T4", "T5", "T6", "C3", "C4", "P3", "P4", "Fz",
    "Cz", "Pz", "O1", "O2",
];

/// A multichannel EEG recording held as one row of microvolt samples per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub patient_id: String,
    pub session_id: String,
    pub channels: Vec<String>,
    pub sample_rate: f64,
    pub samples: Vec<Vec<f64>>,
}

impl Recording {
    pub fn new(
        patient_id: impl Into<String>,
        session_id: impl Into<String>,
        channels: Vec<String>,
        sample_rate: f64,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let rec = Recording {
            patient_id: patient_id.into(),
            session_id: session_id.into(),
            channels,
            sample_rate,
            samples,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidRecording("no channels".into()));
        }
        if self.channels.len() != self.samples.len() {
            return Err(Error::InvalidRecording(format!(
                "{} channel labels but {} sample rows",
                self.channels.len(),
                self.samples.len()
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        let t = self.samples[0].len();
        if t == 0 {
            return Err(Error::InvalidRecording("recording has no samples".into()));
        }
        if let Some((i, row)) = self.samples.iter().enumerate().find(|(_, r)| r.len() != t) {
            return Err(Error::InvalidRecording(format!(
                "channel {} has {} samples, expected {}",
                self.channels[i],
                row.len(),
                t
            )));
        }
        let mut seen = HashSet::new();
        for label in &self.channels {
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidRecording(format!(
                    "duplicate channel label {label}"
                )));
            }
        }
        Ok(())
    }

    /// Identifier used to join a recording with its annotations.
    pub fn id(&self) -> &str {
        &self.session_id
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_sec(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate
    }

    /// Same recording with replaced sample matrix (and possibly rate).
    pub(crate) fn with_samples(&self, sample_rate: f64, samples: Vec<Vec<f64>>) -> Recording {
        Recording {
            patient_id: self.patient_id.clone(),
            session_id: self.session_id.clone(),
            channels: self.channels.clone(),
            sample_rate,
            samples,
        }
    }
}
