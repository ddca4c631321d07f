use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics, roc_auc, ConfusionCounts, Detection};
use crate::error::{Error, Result};

/// Metrics of one patient in one run, or averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub patient_id: String,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub fpr: f64,
    /// Absent when the patient's test segments contain a single class.
    pub auc: Option<f64>,
    pub detection_ratio: f64,
    /// Annotated events; 0 means the detection ratio is the 1.0 convention.
    pub events: usize,
}

impl PatientRow {
    pub fn from_predictions(
        patient_id: &str,
        predicted: &[u8],
        truth: &[u8],
        seizure_prob: &[f64],
        detection: Detection,
    ) -> Result<(Self, ConfusionCounts)> {
        let counts = confusion(predicted, truth)?;
        let m = metrics(&counts);
        let auc = match roc_auc(seizure_prob, truth) {
            Ok(v) => Some(v),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        let row = PatientRow {
            patient_id: patient_id.to_string(),
            precision: m.precision,
            recall: m.recall,
            specificity: m.specificity,
            f1: m.f1,
            fpr: m.fpr,
            auc,
            detection_ratio: detection.ratio(),
            events: detection.events,
        };
        Ok((row, counts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: usize,
    pub patients: Vec<PatientRow>,
    /// Unweighted mean over patients.
    pub mean: PatientRow,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_opt<'a>(values: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().copied().collect();
    (!defined.is_empty()).then(|| mean(defined.into_iter()))
}

fn average_rows(id: &str, rows: &[&PatientRow]) -> PatientRow {
    PatientRow {
        patient_id: id.to_string(),
        precision: mean(rows.iter().map(|r| r.precision)),
        recall: mean(rows.iter().map(|r| r.recall)),
        specificity: mean(rows.iter().map(|r| r.specificity)),
        f1: mean(rows.iter().map(|r| r.f1)),
        fpr: mean(rows.iter().map(|r| r.fpr)),
        auc: mean_opt(rows.iter().map(|r| &r.auc)),
        detection_ratio: mean(rows.iter().map(|r| r.detection_ratio)),
        events: rows.iter().map(|r| r.events).max().unwrap_or(0),
    }
}

/// Averages each patient over runs, then takes the unweighted patient mean.
/// Every run must report the same patients. AUC averages skip undefined
/// values.
pub fn aggregate(runs: &[Vec<PatientRow>]) -> Result<EvalReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::config("no runs to aggregate"))?;
    let mut ids: Vec<&str> = first.iter().map(|r| r.patient_id.as_str()).collect();
    ids.sort_unstable();
    let mut by_patient: BTreeMap<&str, Vec<&PatientRow>> = BTreeMap::new();
    for (k, run) in runs.iter().enumerate() {
        let mut run_ids: Vec<&str> = run.iter().map(|r| r.patient_id.as_str()).collect();
        run_ids.sort_unstable();
        if run_ids != ids {
            return Err(Error::config(format!(
                "run {k} reports patients {run_ids:?}, run 0 reports {ids:?}"
            )));
        }
        for row in run {
            by_patient
                .entry(row.patient_id.as_str())
                .or_default()
                .push(row);
        }
    }
    let patients: Vec<PatientRow> = by_patient
        .iter()
        .map(|(id, rows)| average_rows(id, rows))
        .collect();
    let refs: Vec<&PatientRow> = patients.iter().collect();
    let mut mean_row = average_rows("Mean", &refs);
    mean_row.events = patients.iter().map(|r| r.events).sum();
    Ok(EvalReport {
        runs: runs.len(),
        patients,
        mean: mean_row,
    })
}

impl EvalReport {
    /// Aligned table: rates in percent, F1/AUC/detection ratio as fractions.
    pub fn to_table(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{title} (mean of {} run(s) per patient)", self.runs);
        let header = format!(
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6} {:>10}",
            "Pt.ID", "Pre.", "Rec.", "Spe.", "FPR", "F1", "AUC", "Det. Ratio"
        );
        let rule = "-".repeat(header.len());
        let _ = writeln!(out, "{header}\n{rule}");
        let line = |r: &PatientRow| {
            let auc = r
                .auc
                .map_or_else(|| "--".to_string(), |a| format!("{a:.3}"));
            format!(
                "{:<10} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6.3} {:>6} {:>10.3}",
                r.patient_id,
                100.0 * r.precision,
                100.0 * r.recall,
                100.0 * r.specificity,
                100.0 * r.fpr,
                r.f1,
                auc,
                r.detection_ratio
            )
        };
        for r in &self.patients {
            let _ = writeln!(out, "{}", line(r));
        }
        let _ = writeln!(out, "{rule}\n{}", line(&self.mean));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, f1: f64) -> PatientRow {
        PatientRow {
            patient_id: id.into(),
            precision: f1,
            recall: f1,
            specificity: 0.9,
            f1,
            fpr: 0.1,
            auc: Some(0.8),
            detection_ratio: 1.0,
            events: 1,
        }
    }

    #[test]
    fn identical_runs_are_idempotent() {
        let run = vec![row("A", 0.2), row("B", 0.4)];
        let rep = aggregate(&[run.clone(), run.clone(), run.clone()]).unwrap();
        for (got, want) in rep.patients.iter().zip(&run) {
            assert_eq!(got.patient_id, want.patient_id);
            for (a, b) in [
                (got.precision, want.precision),
                (got.f1, want.f1),
                (got.fpr, want.fpr),
            ] {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!((rep.mean.f1 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn missing_patient_is_an_error() {
        assert!(aggregate(&[vec![row("A", 0.2), row("B", 0.4)], vec![row("A", 0.2)]]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn undefined_auc_is_skipped() {
        let mut b = row("B", 0.4);
        b.auc = None;
        let rep = aggregate(&[vec![row("A", 0.2), b]]).unwrap();
        assert_eq!(rep.mean.auc, Some(0.8));
        let table = rep.to_table("test");
        assert!(table.contains("--"));
        assert!(table.lines().last().unwrap().starts_with("Mean"));
    }
}
