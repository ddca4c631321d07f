use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters and corpus-construction rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainProtocol {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Loss weights for (nonseizure, seizure).
    pub class_weights: [f64; 2],
    pub patience: usize,
    pub runs_per_patient: usize,
    pub val_fraction: f64,
    /// Overlap between consecutive seizure windows.
    pub seizure_overlap: f64,
    /// Nonseizure windows drawn per seizure window, per recording.
    pub nonseizure_ratio: usize,
    /// Minimum gap between a nonseizure window and any seizure.
    pub interictal_margin_sec: f64,
    pub seed: u64,
}

impl Default for TrainProtocol {
    fn default() -> Self {
        TrainProtocol {
            batch_size: 32,
            max_epochs: 300,
            learning_rate: 1e-3,
            class_weights: [0.75, 1.5],
            patience: 30,
            runs_per_patient: 3,
            val_fraction: 0.2,
            seizure_overlap: 0.8,
            nonseizure_ratio: 2,
            interictal_margin_sec: 60.0,
            seed: 0,
        }
    }
}

impl TrainProtocol {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.batch_size < 2 {
            return fail(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.runs_per_patient == 0 {
            return fail("max_epochs, patience and runs_per_patient must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("invalid learning rate {}", self.learning_rate));
        }
        if self
            .class_weights
            .iter()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return fail(format!(
                "class weights must be positive, got {:?}",
                self.class_weights
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return fail(format!(
                "val_fraction must be in (0, 0.5), got {}",
                self.val_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.seizure_overlap) {
            return fail(format!(
                "seizure_overlap must be in [0, 1), got {}",
                self.seizure_overlap
            ));
        }
        if self.nonseizure_ratio == 0 {
            return fail("nonseizure_ratio must be at least 1".into());
        }
        if !(self.interictal_margin_sec >= 0.0) {
            return fail(format!(
                "negative interictal margin {}",
                self.interictal_margin_sec
            ));
        }
        Ok(())
    }
}
