//! Binary segment store.
//!
//! Header: magic `MRSS`, u32 version, u32 channels, u32 samples per segment,
//! f64 sample rate, u64 segment count. Each segment: u16-length recording id,
//! u16-length patient id, f64 start seconds, u8 label, then
//! `channels * samples` little-endian f32 values, channel-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dsp::Segment;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MRSS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStore {
    pub n_channels: usize,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub segments: Vec<Segment>,
}

fn fmt_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {msg}", path.display()))
}

impl SegmentStore {
    pub fn new(
        n_channels: usize,
        n_samples: usize,
        sample_rate: f64,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if let Some(s) = segments
            .iter()
            .find(|s| s.n_channels != n_channels || s.n_samples != n_samples)
        {
            return Err(Error::dim(format!(
                "segment {} is {}x{}, store holds {n_channels}x{n_samples}",
                s.id(),
                s.n_channels,
                s.n_samples
            )));
        }
        Ok(SegmentStore {
            n_channels,
            n_samples,
            sample_rate,
            segments,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.n_channels as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(&(self.n_samples as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(&self.sample_rate.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.segments.len() as u64).to_le_bytes())
            .map_err(io)?;
        let mut buf = Vec::new();
        for s in &self.segments {
            buf.clear();
            for text in [&s.recording_id, &s.patient_id] {
                let len =
                    u16::try_from(text.len()).map_err(|_| fmt_err(path, "identifier too long"))?;
                buf.extend_from_slice(&len.to_le_bytes());
                buf.extend_from_slice(text.as_bytes());
            }
            buf.extend_from_slice(&s.start_sec.to_le_bytes());
            buf.push(s.label);
            for v in &s.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = StoreReader {
            inner: BufReader::new(file),
            path,
        };
        if &r.array::<4>()? != MAGIC {
            return Err(fmt_err(path, "not a segment store"));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(fmt_err(path, format!("unsupported version {version}")));
        }
        let n_channels = u32::from_le_bytes(r.array()?) as usize;
        let n_samples = u32::from_le_bytes(r.array()?) as usize;
        let sample_rate = f64::from_le_bytes(r.array()?);
        let count = u64::from_le_bytes(r.array()?) as usize;

        let mut segments = Vec::with_capacity(count.min(1 << 20));
        let mut values = vec![0u8; n_channels * n_samples * 4];
        for _ in 0..count {
            let recording_id = r.text()?;
            let patient_id = r.text()?;
            let start_sec = f64::from_le_bytes(r.array()?);
            let [label] = r.array()?;
            r.fill(&mut values)?;
            let data = values
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            segments.push(Segment {
                recording_id,
                patient_id,
                start_sec,
                n_channels,
                n_samples,
                data,
                label,
            });
        }
        Ok(SegmentStore {
            n_channels,
            n_samples,
            sample_rate,
            segments,
        })
    }
}

struct StoreReader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> StoreReader<'_, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| fmt_err(self.path, format!("truncated: {e}")))
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    fn text(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        let mut bytes = vec![0u8; len];
        self.fill(&mut bytes)?;
        String::from_utf8(bytes).map_err(|_| fmt_err(self.path, "identifier is not UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let seg = |start: f64, label| Segment {
            recording_id: "P1-1".into(),
            patient_id: "P1".into(),
            start_sec: start,
            n_channels: 2,
            n_samples: 3,
            data: vec![0.5, -1.0, 2.0, 3.25, 0.0, 1e-3],
            label,
        };
        let store = SegmentStore::new(2, 3, 128.0, vec![seg(0.0, 0), seg(1.5, 1)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        store.write(&path).unwrap();
        assert_eq!(SegmentStore::read(&path).unwrap(), store);
        std::fs::write(&path, b"MRSX").unwrap();
        assert!(SegmentStore::read(&path).is_err());
    }
}
