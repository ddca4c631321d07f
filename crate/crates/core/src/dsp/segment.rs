use serde::{Deserialize, Serialize};

use crate::data_io::{AnnotationSet, Recording};
use crate::error::{Error, Result};

/// A fixed-length `C x N` window cut from a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub recording_id: String,
    pub patient_id: String,
    pub start_sec: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    /// Channel-major samples, `data[c * n_samples + t]`.
    pub data: Vec<f32>,
    pub label: u8,
}

impl Segment {
    pub fn id(&self) -> String {
        format!("{}@{:.3}", self.recording_id, self.start_sec)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }
}

/// Number of samples in a `window_sec` window; must be integral.
pub(crate) fn window_samples(window_sec: f64, sample_rate: f64) -> Result<usize> {
    let n = window_sec * sample_rate;
    let r = n.round();
    if !(window_sec > 0.0) || r < 1.0 || (n - r).abs() > 1e-9 {
        return Err(Error::config(format!(
            "window of {window_sec} s at {sample_rate} Hz is not a whole number of samples"
        )));
    }
    Ok(r as usize)
}

/// Seizure label of the window `[start, start + window)`: 1 iff at least
/// half of it lies inside annotated seizures.
pub fn label_window(annotations: &AnnotationSet, start_sec: f64, window_sec: f64) -> u8 {
    let covered = annotations.seizure_overlap(start_sec, start_sec + window_sec);
    u8::from(covered + 1e-9 >= 0.5 * window_sec)
}

/// Copies `n` samples starting at `start_sample` out of every channel.
pub fn segment_at(recording: &Recording, start_sample: usize, n: usize, label: u8) -> Segment {
    let mut data = Vec::with_capacity(recording.n_channels() * n);
    for row in &recording.samples {
        data.extend(
            row[start_sample..start_sample + n]
                .iter()
                .map(|&v| v as f32),
        );
    }
    Segment {
        recording_id: recording.id().to_string(),
        patient_id: recording.patient_id.clone(),
        start_sec: start_sample as f64 / recording.sample_rate,
        n_channels: recording.n_channels(),
        n_samples: n,
        data,
        label,
    }
}

/// Sliding windows of `window_sec` advancing by `window_sec * (1 - overlap)`;
/// the trailing partial window is dropped.
pub fn segmentize(
    recording: &Recording,
    annotations: &AnnotationSet,
    window_sec: f64,
    overlap_fraction: f64,
) -> Result<Vec<Segment>> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::config(format!(
            "overlap fraction must be in [0, 1), got {overlap_fraction}"
        )));
    }
    let fs = recording.sample_rate;
    let n = window_samples(window_sec, fs)?;
    let total = recording.n_samples();
    if total < n {
        return Err(Error::config(format!(
            "recording {} lasts {:.3} s, shorter than the {window_sec} s window",
            recording.id(),
            recording.duration_sec()
        )));
    }
    let stride = window_sec * (1.0 - overlap_fraction);
    let mut out = Vec::new();
    for k in 0.. {
        let start_sec = k as f64 * stride;
        let start = (start_sec * fs).round() as usize;
        if start + n > total {
            break;
        }
        let label = label_window(annotations, start as f64 / fs, window_sec);
        out.push(segment_at(recording, start, n, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::Interval;

    fn flat(duration: f64, fs: f64) -> Recording {
        let t = (duration * fs) as usize;
        Recording::new("P", "P-1", vec!["Cz".into()], fs, vec![vec![0.0; t]]).unwrap()
    }

    #[test]
    fn long_recording_count() {
        // 3.2 h at 500 Hz.
        let rec = flat(3.2 * 3600.0, 500.0);
        let segs = segmentize(&rec, &AnnotationSet::empty("P-1"), 10.0, 0.0).unwrap();
        assert_eq!(segs.len(), 1152);
    }

    #[test]
    fn labels_follow_half_overlap_rule() {
        let rec = flat(300.0, 10.0);
        let ann = AnnotationSet::new("P-1", vec![Interval::new(100.0, 150.0)]).unwrap();
        let segs = segmentize(&rec, &ann, 10.0, 0.0).unwrap();
        let positives: Vec<f64> = segs
            .iter()
            .filter(|s| s.label == 1)
            .map(|s| s.start_sec)
            .collect();
        assert_eq!(positives, vec![100.0, 110.0, 120.0, 130.0, 140.0]);
    }

    #[test]
    fn half_covered_window_is_positive() {
        let ann = AnnotationSet::new("r", vec![Interval::new(105.0, 200.0)]).unwrap();
        assert_eq!(label_window(&ann, 100.0, 10.0), 1);
        assert_eq!(label_window(&ann, 95.0, 10.0), 0);
    }

    #[test]
    fn overlapped_stride() {
        let rec = flat(100.0, 10.0);
        let segs = segmentize(&rec, &AnnotationSet::empty("P-1"), 10.0, 0.8).unwrap();
        assert_eq!(segs.len(), 46);
        assert!((segs[1].start_sec - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_window_samples_rejected() {
        let rec = flat(100.0, 10.0);
        assert!(segmentize(&rec, &AnnotationSet::empty("P-1"), 0.25, 0.0).is_err());
    }
}
