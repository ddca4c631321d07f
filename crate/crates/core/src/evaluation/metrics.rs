use serde::{Deserialize, Serialize};

use crate::data_io::AnnotationSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub fpr: f64,
}

pub fn confusion(predicted: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions but {} ground-truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        if p > 1 || t > 1 {
            return Err(Error::config(format!(
                "labels must be 0 or 1, got ({p}, {t})"
            )));
        }
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Rates with every empty denominator defined as 0.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        specificity: ratio(c.tn, c.tn + c.fp),
        f1,
        fpr: ratio(c.fp, c.fp + c.tn),
    }
}

/// Area under the ROC curve by the trapezoidal rule over all distinct
/// thresholds; tied scores move the curve diagonally.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} scores but {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined(
            "AUC needs both classes in the ground truth".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Ok(area / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub detected: usize,
    pub events: usize,
}

impl Detection {
    /// Detected fraction of events, 1.0 when there are none.
    pub fn ratio(&self) -> f64 {
        if self.events == 0 {
            1.0
        } else {
            self.detected as f64 / self.events as f64
        }
    }

    pub fn defined(&self) -> bool {
        self.events > 0
    }
}

impl std::ops::Add for Detection {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Detection {
            detected: self.detected + o.detected,
            events: self.events + o.events,
        }
    }
}

/// An annotated event counts as detected when any segment overlapping it by
/// a positive duration is labeled 1. `spans` are `(start, end)` in seconds.
pub fn detection_ratio(
    labels: &[u8],
    spans: &[(f64, f64)],
    annotations: &AnnotationSet,
) -> Result<Detection> {
    if labels.len() != spans.len() {
        return Err(Error::dim(format!(
            "{} labels but {} segment spans",
            labels.len(),
            spans.len()
        )));
    }
    let detected = annotations
        .intervals
        .iter()
        .filter(|iv| {
            labels
                .iter()
                .zip(spans)
                .any(|(&l, &(s, e))| l == 1 && iv.overlap(s, e) > 0.0)
        })
        .count();
    Ok(Detection {
        detected,
        events: annotations.intervals.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::Interval;

    #[test]
    fn hand_fixture() {
        let mut pred = vec![0u8; 100];
        let mut truth = vec![0u8; 100];
        pred[..10].fill(1);
        truth[..8].fill(1);
        truth[10..12].fill(1);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (8, 2, 2, 88));
        let m = metrics(&c);
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 0.8).abs() < 1e-12);
        assert!((m.specificity - 88.0 / 90.0).abs() < 1e-12);
        assert!((m.f1 - 0.8).abs() < 1e-12);
        assert!((m.fpr - 2.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let c = confusion(&[0; 100], &[0; 100]).unwrap();
        assert_eq!(c.tn, 100);
        let m = metrics(&c);
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        let c = confusion(&[1, 0, 1], &[0, 1, 0]).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        let m = metrics(&confusion(&[1, 0, 1], &[1, 0, 1]).unwrap());
        assert_eq!(
            (m.precision, m.recall, m.specificity, m.fpr),
            (1.0, 1.0, 1.0, 0.0)
        );
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(
            roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(),
            0.75
        );
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn detection_cases() {
        let ann = AnnotationSet::new("r", vec![Interval::new(100.0, 150.0)]).unwrap();
        let spans: Vec<(f64, f64)> = (0..30)
            .map(|k| (k as f64 * 10.0, k as f64 * 10.0 + 10.0))
            .collect();
        let mut labels = vec![0u8; 30];
        labels[11] = 1;
        assert_eq!(detection_ratio(&labels, &spans, &ann).unwrap().ratio(), 1.0);
        assert_eq!(
            detection_ratio(&[0; 30], &spans, &ann).unwrap().ratio(),
            0.0
        );
        // Touching the boundary is not an overlap.
        labels[11] = 0;
        labels[15] = 1;
        assert_eq!(detection_ratio(&labels, &spans, &ann).unwrap().ratio(), 0.0);

        let ann = AnnotationSet::new(
            "r",
            vec![
                Interval::new(10.0, 20.0),
                Interval::new(50.0, 60.0),
                Interval::new(200.0, 210.0),
            ],
        )
        .unwrap();
        let mut labels = vec![0u8; 30];
        labels[1] = 1;
        labels[20] = 1;
        let d = detection_ratio(&labels, &spans, &ann).unwrap();
        assert!((d.ratio() - 2.0 / 3.0).abs() < 1e-12);
        let none = detection_ratio(&labels, &spans, &AnnotationSet::empty("r")).unwrap();
        assert!(!none.defined() && none.ratio() == 1.0);
    }
}
