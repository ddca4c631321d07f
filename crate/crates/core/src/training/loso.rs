use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One leave-one-subject-out job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoSplit {
    pub test_patient_id: String,
    pub train_patient_ids: Vec<String>,
    pub run_index: usize,
}

impl LosoSplit {
    /// Stable job name, used for checkpoint and trace file names.
    pub fn job_name(&self) -> String {
        format!("{}_run{}", self.test_patient_id, self.run_index)
    }
}

/// `patients x runs` splits ordered by run, then by patient.
pub fn make_loso_splits(patient_ids: &[String], runs: usize) -> Result<Vec<LosoSplit>> {
    let unique: BTreeSet<&String> = patient_ids.iter().collect();
    if unique.len() != patient_ids.len() {
        return Err(Error::config("duplicate patient ids in LOSO split request"));
    }
    if patient_ids.len() < 2 {
        return Err(Error::config(format!(
            "LOSO needs at least 2 patients, got {}",
            patient_ids.len()
        )));
    }
    let mut splits = Vec::with_capacity(patient_ids.len() * runs);
    for run_index in 0..runs {
        for test in patient_ids {
            splits.push(LosoSplit {
                test_patient_id: test.clone(),
                train_patient_ids: patient_ids.iter().filter(|p| *p != test).cloned().collect(),
                run_index,
            });
        }
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("PN{i:02}")).collect()
    }

    #[test]
    fn fourteen_patients_three_runs() {
        let splits = make_loso_splits(&ids(14), 3).unwrap();
        assert_eq!(splits.len(), 42);
        for s in &splits {
            assert!(!s.train_patient_ids.contains(&s.test_patient_id));
            let mut all = s.train_patient_ids.clone();
            all.push(s.test_patient_id.clone());
            all.sort();
            assert_eq!(all, ids(14));
        }
    }

    #[test]
    fn two_patients() {
        let splits = make_loso_splits(&ids(2), 1).unwrap();
        let tests: Vec<_> = splits.iter().map(|s| s.test_patient_id.as_str()).collect();
        assert_eq!(tests, ["PN00", "PN01"]);
    }

    #[test]
    fn errors() {
        assert!(make_loso_splits(&ids(1), 1).is_err());
        assert!(make_loso_splits(&["A".to_string(), "A".to_string()], 1).is_err());
    }
}
