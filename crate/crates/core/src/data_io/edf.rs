//! Plain EDF (16-bit) reader and writer.
//!
//! Only the fixed-layout header is interpreted; EDF+ annotation channels are
//! treated like any other signal.

use std::fs;
use std::path::Path;

use log::warn;

use super::Recording;
use crate::error::{Error, Result};

const MAIN_HEADER_BYTES: usize = 256;
const SIGNAL_HEADER_BYTES: usize = 256;

/// Fixed-width fields of one signal block, in on-disk order.
const SIGNAL_FIELDS: [(&str, usize); 10] = [
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
];

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl EdfSignalHeader {
    fn check_scaling(&self, index: usize) -> Result<()> {
        if self.digital_max == self.digital_min {
            return Err(Error::EdfScaling {
                signal: index,
                label: self.label.clone(),
                digital: self.digital_max,
            });
        }
        Ok(())
    }

    /// Physical value of one digital word.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let gain = (self.physical_max - self.physical_min)
            / (self.digital_max as f64 - self.digital_min as f64);
        (digital as f64 - self.digital_min as f64) * gain + self.physical_min
    }

    /// Nearest digital word for a physical value, clamped to the digital range.
    pub fn to_digital(&self, physical: f64) -> i16 {
        let gain = (self.digital_max as f64 - self.digital_min as f64)
            / (self.physical_max - self.physical_min);
        let d = ((physical - self.physical_min) * gain + self.digital_min as f64).round();
        d.clamp(self.digital_min as f64, self.digital_max as f64) as i16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub reserved: String,
    pub n_records: i64,
    pub record_duration: f64,
    pub signals: Vec<EdfSignalHeader>,
}

impl EdfHeader {
    fn record_words(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record).sum()
    }
}

/// An EDF file as stored: header plus the raw digital words of every signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfFile {
    pub header: EdfHeader,
    /// One vector of digital words per signal, records concatenated.
    pub data: Vec<Vec<i16>>,
}

struct FieldReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> FieldReader<'a> {
    fn text(&mut self, field: &'static str, width: usize) -> Result<String> {
        let end = self.offset + width;
        if end > self.bytes.len() {
            return Err(Error::EdfParse {
                offset: self.offset,
                field,
                message: format!("header ends at byte {}", self.bytes.len()),
            });
        }
        let raw = &self.bytes[self.offset..end];
        let s = String::from_utf8_lossy(raw).trim().to_string();
        self.offset = end;
        Ok(s)
    }

    fn number<T: std::str::FromStr>(&mut self, field: &'static str, width: usize) -> Result<T> {
        let start = self.offset;
        let s = self.text(field, width)?;
        s.parse::<T>().map_err(|_| Error::EdfParse {
            offset: start,
            field,
            message: format!("expected a number, found {s:?}"),
        })
    }
}

fn parse_header(bytes: &[u8]) -> Result<EdfHeader> {
    let mut r = FieldReader { bytes, offset: 0 };
    let version = r.text("version", 8)?;
    let patient = r.text("patient", 80)?;
    let recording = r.text("recording", 80)?;
    let start_date = r.text("start_date", 8)?;
    let start_time = r.text("start_time", 8)?;
    let header_bytes: usize = r.number("header_bytes", 8)?;
    let reserved = r.text("reserved", 44)?;
    let n_records: i64 = r.number("n_records", 8)?;
    let record_duration: f64 = r.number("record_duration", 8)?;
    let ns_offset = r.offset;
    let n_signals: usize = r.number("n_signals", 4)?;
    if n_signals == 0 {
        return Err(Error::EdfParse {
            offset: ns_offset,
            field: "n_signals",
            message: "header declares no signals".into(),
        });
    }
    if !(record_duration > 0.0) {
        return Err(Error::EdfParse {
            offset: ns_offset - 8,
            field: "record_duration",
            message: format!("record duration must be positive, got {record_duration}"),
        });
    }

    // Signal fields are stored field-major: all labels, then all transducers, ...
    let mut columns: Vec<Vec<(usize, String)>> = Vec::with_capacity(SIGNAL_FIELDS.len());
    for (name, width) in SIGNAL_FIELDS {
        let mut col = Vec::with_capacity(n_signals);
        for _ in 0..n_signals {
            let at = r.offset;
            col.push((at, r.text(name, width)?));
        }
        columns.push(col);
    }
    let num = |col: usize, i: usize| -> Result<f64> {
        let (at, s) = &columns[col][i];
        s.parse::<f64>().map_err(|_| Error::EdfParse {
            offset: *at,
            field: SIGNAL_FIELDS[col].0,
            message: format!("expected a number, found {s:?}"),
        })
    };
    let int = |col: usize, i: usize| -> Result<i64> {
        let (at, s) = &columns[col][i];
        s.parse::<i64>().map_err(|_| Error::EdfParse {
            offset: *at,
            field: SIGNAL_FIELDS[col].0,
            message: format!("expected an integer, found {s:?}"),
        })
    };

    let mut signals = Vec::with_capacity(n_signals);
    #[allow(clippy::needless_range_loop)]
    for i in 0..n_signals {
        let spr = int(8, i)?;
        if spr < 0 {
            return Err(Error::EdfParse {
                offset: columns[8][i].0,
                field: "samples_per_record",
                message: format!("negative sample count {spr}"),
            });
        }
        signals.push(EdfSignalHeader {
            label: columns[0][i].1.clone(),
            transducer: columns[1][i].1.clone(),
            physical_dimension: columns[2][i].1.clone(),
            physical_min: num(3, i)?,
            physical_max: num(4, i)?,
            digital_min: int(5, i)? as i32,
            digital_max: int(6, i)? as i32,
            prefilter: columns[7][i].1.clone(),
            samples_per_record: spr as usize,
            reserved: columns[9][i].1.clone(),
        });
    }

    Ok(EdfHeader {
        version,
        patient,
        recording,
        start_date,
        start_time,
        header_bytes,
        reserved,
        n_records,
        record_duration,
        signals,
    })
}

impl EdfFile {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let expected_header = MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * header.signals.len();
        if header.header_bytes != expected_header {
            warn!(
                "EDF header declares {} header bytes, layout implies {expected_header}",
                header.header_bytes
            );
        }
        let data_bytes = bytes.len().saturating_sub(expected_header);
        let record_bytes = 2 * header.record_words();
        let available = data_bytes.checked_div(record_bytes).unwrap_or(0);
        let n_records = if header.n_records < 0 {
            // -1 marks an unfinished recording; trust the file length.
            available
        } else {
            let n = header.n_records as usize;
            if available < n {
                return Err(Error::EdfTruncated {
                    expected: n,
                    actual: available,
                });
            }
            n
        };

        let mut data: Vec<Vec<i16>> = header
            .signals
            .iter()
            .map(|s| Vec::with_capacity(s.samples_per_record * n_records))
            .collect();
        let mut pos = expected_header;
        for _ in 0..n_records {
            for (sig, out) in header.signals.iter().zip(data.iter_mut()) {
                for _ in 0..sig.samples_per_record {
                    out.push(i16::from_le_bytes([bytes[pos], bytes[pos + 1]]));
                    pos += 2;
                }
            }
        }
        let mut header = header;
        header.n_records = n_records as i64;
        Ok(EdfFile { header, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let ns = h.signals.len();
        let mut out = Vec::with_capacity(MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns);
        push_field(&mut out, &h.version, 8, "version")?;
        push_field(&mut out, &h.patient, 80, "patient")?;
        push_field(&mut out, &h.recording, 80, "recording")?;
        push_field(&mut out, &h.start_date, 8, "start_date")?;
        push_field(&mut out, &h.start_time, 8, "start_time")?;
        let header_bytes = MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns;
        push_field(&mut out, &header_bytes.to_string(), 8, "header_bytes")?;
        push_field(&mut out, &h.reserved, 44, "reserved")?;
        push_field(&mut out, &h.n_records.to_string(), 8, "n_records")?;
        push_field(
            &mut out,
            &format_number(h.record_duration, 8)?,
            8,
            "record_duration",
        )?;
        push_field(&mut out, &ns.to_string(), 4, "n_signals")?;

        let fields: [(&str, usize, FieldFormat); 10] = [
            ("label", 16, Box::new(|s| Ok(s.label.clone()))),
            ("transducer", 80, Box::new(|s| Ok(s.transducer.clone()))),
            (
                "physical_dimension",
                8,
                Box::new(|s| Ok(s.physical_dimension.clone())),
            ),
            (
                "physical_min",
                8,
                Box::new(|s| format_number(s.physical_min, 8)),
            ),
            (
                "physical_max",
                8,
                Box::new(|s| format_number(s.physical_max, 8)),
            ),
            (
                "digital_min",
                8,
                Box::new(|s| Ok(s.digital_min.to_string())),
            ),
            (
                "digital_max",
                8,
                Box::new(|s| Ok(s.digital_max.to_string())),
            ),
            ("prefilter", 80, Box::new(|s| Ok(s.prefilter.clone()))),
            (
                "samples_per_record",
                8,
                Box::new(|s| Ok(s.samples_per_record.to_string())),
            ),
            ("reserved", 32, Box::new(|s| Ok(s.reserved.clone()))),
        ];
        for (name, width, get) in &fields {
            for sig in &h.signals {
                push_field(&mut out, &get(sig)?, *width, name)?;
            }
        }

        let n_records = h.n_records.max(0) as usize;
        for (sig, words) in h.signals.iter().zip(&self.data) {
            if words.len() != sig.samples_per_record * n_records {
                return Err(Error::InvalidRecording(format!(
                    "signal {} holds {} words, header implies {}",
                    sig.label,
                    words.len(),
                    sig.samples_per_record * n_records
                )));
            }
        }
        for rec in 0..n_records {
            for (sig, words) in h.signals.iter().zip(&self.data) {
                let spr = sig.samples_per_record;
                for w in &words[rec * spr..(rec + 1) * spr] {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Converts to a [`Recording`], keeping only signals at the dominant
    /// samples-per-record rate.
    pub fn to_recording(&self, session_id: &str) -> Result<Recording> {
        let h = &self.header;
        let mut counts: Vec<(usize, usize)> = Vec::new();
        for s in &h.signals {
            match counts
                .iter_mut()
                .find(|(spr, _)| *spr == s.samples_per_record)
            {
                Some((_, n)) => *n += 1,
                None => counts.push((s.samples_per_record, 1)),
            }
        }
        // Most common rate; ties go to the rate seen first.
        let mut dominant = counts[0];
        for &c in &counts[1..] {
            if c.1 > dominant.1 {
                dominant = c;
            }
        }
        let spr = dominant.0;

        let mut channels = Vec::new();
        let mut samples = Vec::new();
        for (i, (sig, words)) in h.signals.iter().zip(&self.data).enumerate() {
            if sig.samples_per_record != spr {
                warn!(
                    "skipping EDF signal {} ({}): {} samples/record, expected {spr}",
                    i, sig.label, sig.samples_per_record
                );
                continue;
            }
            sig.check_scaling(i)?;
            channels.push(sig.label.clone());
            samples.push(words.iter().map(|&w| sig.to_physical(w)).collect());
        }

        let patient_id = match h.patient.split_whitespace().next() {
            Some(tok) if tok != "X" => tok.to_string(),
            _ => session_id.to_string(),
        };
        Recording::new(
            patient_id,
            session_id,
            channels,
            spr as f64 / h.record_duration,
            samples,
        )
    }

    /// Builds a 16-bit EDF image of `recording`, one scaling per channel chosen
    /// to span the channel's physical range.
    pub fn from_recording(recording: &Recording, record_duration: f64) -> Result<Self> {
        recording.validate()?;
        let spr_f = recording.sample_rate * record_duration;
        let spr = spr_f.round() as usize;
        if spr == 0 || (spr_f - spr as f64).abs() > 1e-9 {
            return Err(Error::config(format!(
                "record duration {record_duration} s does not hold a whole number of samples at {} Hz",
                recording.sample_rate
            )));
        }
        let t = recording.n_samples();
        if !t.is_multiple_of(spr) {
            return Err(Error::config(format!(
                "{t} samples do not fill whole records of {spr}"
            )));
        }
        let n_records = t / spr;

        let mut signals = Vec::with_capacity(recording.n_channels());
        let mut data = Vec::with_capacity(recording.n_channels());
        for (label, row) in recording.channels.iter().zip(&recording.samples) {
            let (lo, hi) = row
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                    (a.min(x), b.max(x))
                });
            let (phys_min, phys_max) = physical_bounds(lo, hi)?;
            let sig = EdfSignalHeader {
                label: label.clone(),
                transducer: String::new(),
                physical_dimension: "uV".into(),
                physical_min: phys_min,
                physical_max: phys_max,
                digital_min: i16::MIN as i32,
                digital_max: i16::MAX as i32,
                prefilter: String::new(),
                samples_per_record: spr,
                reserved: String::new(),
            };
            data.push(row.iter().map(|&x| sig.to_digital(x)).collect());
            signals.push(sig);
        }

        Ok(EdfFile {
            header: EdfHeader {
                version: "0".into(),
                patient: format!("{} X X X", recording.patient_id),
                recording: format!("Startdate X X X {}", recording.session_id),
                start_date: "01.01.00".into(),
                start_time: "00.00.00".into(),
                header_bytes: MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * signals.len(),
                reserved: String::new(),
                n_records: n_records as i64,
                record_duration,
                signals,
            },
            data,
        })
    }
}

/// Physical range written to the header: 8 ASCII characters, rounded outward
/// so every sample stays representable.
fn physical_bounds(lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite(
            "recording contains non-finite samples".into(),
        ));
    }
    let (mut lo, mut hi) = (lo, hi);
    if hi - lo < 1e-3 {
        lo -= 1.0;
        hi += 1.0;
    }
    for decimals in (0..=4).rev() {
        let scale = 10f64.powi(decimals);
        let l = (lo * scale).floor() / scale;
        let h = (hi * scale).ceil() / scale;
        let ls = format!("{l:.prec$}", prec = decimals as usize);
        let hs = format!("{h:.prec$}", prec = decimals as usize);
        if ls.len() <= 8 && hs.len() <= 8 {
            return Ok((ls.parse().unwrap(), hs.parse().unwrap()));
        }
    }
    Err(Error::config(format!(
        "physical range [{lo}, {hi}] does not fit the 8-character EDF field"
    )))
}

fn format_number(x: f64, width: usize) -> Result<String> {
    let plain = format!("{x}");
    if plain.len() <= width {
        return Ok(plain);
    }
    for decimals in (0..width).rev() {
        let s = format!("{x:.decimals$}");
        if s.len() <= width {
            return Ok(s);
        }
    }
    Err(Error::config(format!(
        "{x} does not fit in {width} characters"
    )))
}

fn push_field(out: &mut Vec<u8>, value: &str, width: usize, name: &str) -> Result<()> {
    if !value.is_ascii() || value.len() > width {
        return Err(Error::config(format!(
            "EDF field {name} value {value:?} is not ASCII of at most {width} bytes"
        )));
    }
    out.extend_from_slice(value.as_bytes());
    out.extend(std::iter::repeat_n(b' ', width - value.len()));
    Ok(())
}

/// Reads an EDF file into a [`Recording`]; the session id is the file stem.
type FieldFormat = Box<dyn Fn(&EdfSignalHeader) -> Result<String>>;

pub fn read_edf(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    let file = EdfFile::read(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.to_recording(&stem)
}

/// Writes `recording` as 16-bit EDF with records of `record_duration` seconds.
pub fn write_edf(
    recording: &Recording,
    path: impl AsRef<Path>,
    record_duration: f64,
) -> Result<()> {
    EdfFile::from_recording(recording, record_duration)?.write(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel(t: usize, fs: f64) -> Recording {
        let a = (0..t).map(|i| 50.0 * (i as f64 * 0.01).sin()).collect();
        let b = (0..t).map(|i| -20.0 + (i % 7) as f64).collect();
        Recording::new(
            "PN00",
            "PN00-1",
            vec!["Fp1".into(), "Fp2".into()],
            fs,
            vec![a, b],
        )
        .unwrap()
    }

    #[test]
    fn write_read_round_trip_shape() {
        let rec = two_channel(5000, 500.0);
        let bytes = EdfFile::from_recording(&rec, 1.0)
            .unwrap()
            .to_bytes()
            .unwrap();
        let back = EdfFile::from_bytes(&bytes)
            .unwrap()
            .to_recording("PN00-1")
            .unwrap();
        assert_eq!(back.n_channels(), 2);
        assert_eq!(back.n_samples(), 5000);
        assert_eq!(back.sample_rate, 500.0);
        assert_eq!(back.patient_id, "PN00");
        for (x, y) in rec
            .samples
            .iter()
            .flatten()
            .zip(back.samples.iter().flatten())
        {
            // Quantization step is range / 65535.
            assert!((x - y).abs() < 100.0 / 65535.0 + 1e-9);
        }
    }

    #[test]
    fn physical_mapping_of_zero_word() {
        let sig = EdfSignalHeader {
            label: "Fp1".into(),
            transducer: String::new(),
            physical_dimension: "uV".into(),
            physical_min: -1000.0,
            physical_max: 1000.0,
            digital_min: -32768,
            digital_max: 32767,
            prefilter: String::new(),
            samples_per_record: 1,
            reserved: String::new(),
        };
        // (0 + 32768) * 2000 / 65535 - 1000
        let expected = 32768.0 * 2000.0 / 65535.0 - 1000.0;
        assert!((sig.to_physical(0) - expected).abs() < 1e-12);
        assert!((sig.to_physical(0) - 0.0153).abs() < 1e-4);
    }

    #[test]
    fn zero_records_is_rejected() {
        let rec = two_channel(500, 500.0);
        let mut file = EdfFile::from_recording(&rec, 1.0).unwrap();
        file.header.n_records = 0;
        file.data.iter_mut().for_each(Vec::clear);
        let bytes = file.to_bytes().unwrap();
        let err = EdfFile::from_bytes(&bytes)
            .unwrap()
            .to_recording("x")
            .unwrap_err();
        assert!(matches!(err, Error::InvalidRecording(_)));
    }

    #[test]
    fn truncated_data_reports_counts() {
        let rec = two_channel(5000, 500.0);
        let mut bytes = EdfFile::from_recording(&rec, 1.0)
            .unwrap()
            .to_bytes()
            .unwrap();
        bytes.truncate(bytes.len() - 100);
        match EdfFile::from_bytes(&bytes).unwrap_err() {
            Error::EdfTruncated { expected, actual } => {
                assert_eq!(expected, 10);
                assert_eq!(actual, 9);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_numeric_field_names_offset() {
        let rec = two_channel(500, 500.0);
        let mut bytes = EdfFile::from_recording(&rec, 1.0)
            .unwrap()
            .to_bytes()
            .unwrap();
        bytes[236..244].copy_from_slice(b"ten     ");
        match EdfFile::from_bytes(&bytes).unwrap_err() {
            Error::EdfParse { offset, field, .. } => {
                assert_eq!(offset, 236);
                assert_eq!(field, "n_records");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn equal_digital_bounds_is_scaling_error() {
        let rec = two_channel(500, 500.0);
        let mut file = EdfFile::from_recording(&rec, 1.0).unwrap();
        file.header.signals[1].digital_max = file.header.signals[1].digital_min;
        let err = file.to_recording("x").unwrap_err();
        assert!(matches!(err, Error::EdfScaling { signal: 1, .. }));
    }

    #[test]
    fn mismatched_rate_signal_is_skipped() {
        let rec = two_channel(1000, 500.0);
        let mut file = EdfFile::from_recording(&rec, 1.0).unwrap();
        // Add a third signal at a different rate.
        let mut extra = file.header.signals[0].clone();
        extra.label = "EKG".into();
        extra.samples_per_record = 250;
        file.header.signals.push(extra);
        file.data.push(vec![0; 500]);
        let back = EdfFile::from_bytes(&file.to_bytes().unwrap())
            .unwrap()
            .to_recording("x")
            .unwrap();
        assert_eq!(back.channels, vec!["Fp1", "Fp2"]);
    }
}
