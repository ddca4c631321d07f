use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ANNOTATION_HEADER: &str = "recording_id,onset_sec,offset_sec";

/// Seizure interval in seconds from recording start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub onset: f64,
    pub offset: f64,
}

impl Interval {
    pub fn new(onset: f64, offset: f64) -> Self {
        Interval { onset, offset }
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    /// Length of the intersection with `[start, end)`.
    pub fn overlap(&self, start: f64, end: f64) -> f64 {
        (self.offset.min(end) - self.onset.max(start)).max(0.0)
    }
}

/// Expert seizure annotations of a single recording.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub recording_id: String,
    pub intervals: Vec<Interval>,
}

impl AnnotationSet {
    /// Sorts and validates `intervals`.
    pub fn new(recording_id: impl Into<String>, mut intervals: Vec<Interval>) -> Result<Self> {
        intervals.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        let set = AnnotationSet {
            recording_id: recording_id.into(),
            intervals,
        };
        set.check_order()?;
        Ok(set)
    }

    pub fn empty(recording_id: impl Into<String>) -> Self {
        AnnotationSet {
            recording_id: recording_id.into(),
            intervals: Vec::new(),
        }
    }

    fn check_order(&self) -> Result<()> {
        for iv in &self.intervals {
            if !(iv.onset >= 0.0) || !(iv.offset > iv.onset) {
                return Err(Error::Annotation(format!(
                    "interval ({}, {}) must satisfy 0 <= onset < offset",
                    iv.onset, iv.offset
                )));
            }
        }
        for w in self.intervals.windows(2) {
            if w[1].onset < w[0].offset {
                return Err(Error::Annotation(format!(
                    "intervals ({}, {}) and ({}, {}) overlap",
                    w[0].onset, w[0].offset, w[1].onset, w[1].offset
                )));
            }
        }
        Ok(())
    }

    /// Checks every interval lies inside a recording of `duration_sec`.
    pub fn validate(&self, duration_sec: f64) -> Result<()> {
        self.check_order()?;
        if let Some(iv) = self
            .intervals
            .iter()
            .find(|iv| iv.offset > duration_sec + 1e-9)
        {
            return Err(Error::Annotation(format!(
                "{}: interval ({}, {}) ends after the recording ({duration_sec} s)",
                self.recording_id, iv.onset, iv.offset
            )));
        }
        Ok(())
    }

    /// Seconds of `[start, end)` covered by seizure intervals.
    pub fn seizure_overlap(&self, start: f64, end: f64) -> f64 {
        self.intervals.iter().map(|iv| iv.overlap(start, end)).sum()
    }

    /// Distance in seconds from `[start, end)` to the nearest interval;
    /// zero when they intersect, infinite without intervals.
    pub fn distance_to_seizure(&self, start: f64, end: f64) -> f64 {
        self.intervals
            .iter()
            .map(|iv| {
                if iv.offset <= start {
                    start - iv.offset
                } else if iv.onset >= end {
                    iv.onset - end
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_seizure_sec(&self) -> f64 {
        self.intervals.iter().map(Interval::duration).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ANNOTATION_HEADER);
        out.push('\n');
        for iv in &self.intervals {
            let _ = writeln!(out, "{},{},{}", self.recording_id, iv.onset, iv.offset);
        }
        out
    }
}

/// Parses annotation CSV text. Every row must name the same recording;
/// a header-only file yields an empty set for `default_id`.
pub fn parse_annotations(text: &str, default_id: &str) -> Result<AnnotationSet> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == ANNOTATION_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Annotation(format!(
                "expected header `{ANNOTATION_HEADER}`, found `{h}`"
            )))
        }
        None => return Err(Error::Annotation("empty annotation file".into())),
    }

    let mut recording_id: Option<String> = None;
    let mut rows: Vec<(usize, Interval)> = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Annotation(format!(
                "row {row}: expected 3 columns, found {}",
                cols.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Annotation(format!("row {row}: {what} {s:?} is not a number")))
        };
        let onset = parse(cols[1], "onset")?;
        let offset = parse(cols[2], "offset")?;
        if !(onset >= 0.0) {
            return Err(Error::Annotation(format!(
                "row {row}: negative onset {onset}"
            )));
        }
        if !(offset > onset) {
            return Err(Error::Annotation(format!(
                "row {row}: offset {offset} must exceed onset {onset}"
            )));
        }
        match &recording_id {
            None => recording_id = Some(cols[0].to_string()),
            Some(id) if id != cols[0] => {
                return Err(Error::Annotation(format!(
                    "row {row}: recording {} differs from {id}",
                    cols[0]
                )))
            }
            _ => {}
        }
        rows.push((row, Interval::new(onset, offset)));
    }

    rows.sort_by(|a, b| a.1.onset.total_cmp(&b.1.onset));
    for w in rows.windows(2) {
        if w[1].1.onset < w[0].1.offset {
            return Err(Error::Annotation(format!(
                "rows {} and {} overlap: ({}, {}) and ({}, {})",
                w[0].0, w[1].0, w[0].1.onset, w[0].1.offset, w[1].1.onset, w[1].1.offset
            )));
        }
    }
    AnnotationSet::new(
        recording_id.unwrap_or_else(|| default_id.to_string()),
        rows.into_iter().map(|(_, iv)| iv).collect(),
    )
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_annotations(&text, &stem)
}

pub fn write_annotations(set: &AnnotationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_csv()).map_err(|e| Error::io(path, e))
}
