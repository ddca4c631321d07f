use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::protocol::TrainProtocol;
use crate::data_io::{AnnotationSet, Recording};
use crate::dsp::segment::window_samples;
use crate::dsp::{segment_at, Segment};
use crate::error::{Error, Result};

/// Class-balanced training windows.
///
/// Per recording: every window of length `window_sec` that lies fully inside a
/// seizure, advancing by `window_sec * (1 - seizure_overlap)`, labeled 1; then
/// `nonseizure_ratio` times as many windows labeled 0, drawn without
/// replacement from the same-stride grid over the whole recording, keeping
/// only windows at least `interictal_margin_sec` away from every seizure.
pub fn build_train_corpus(
    recordings: &[Recording],
    annotations: &[AnnotationSet],
    protocol: &TrainProtocol,
    window_sec: f64,
) -> Result<Vec<Segment>> {
    protocol.validate()?;
    if recordings.len() != annotations.len() {
        return Err(Error::config(format!(
            "{} recordings but {} annotation sets",
            recordings.len(),
            annotations.len()
        )));
    }
    let stride = window_sec * (1.0 - protocol.seizure_overlap);
    let mut corpus = Vec::new();
    for (index, (rec, ann)) in recordings.iter().zip(annotations).enumerate() {
        if ann.recording_id != rec.id() {
            return Err(Error::Annotation(format!(
                "annotations for {} paired with recording {}",
                ann.recording_id,
                rec.id()
            )));
        }
        let fs = rec.sample_rate;
        let n = window_samples(window_sec, fs)?;
        let total = rec.n_samples();
        let fits = |start: usize| start + n <= total;

        let mut seizures = Vec::new();
        for iv in &ann.intervals {
            for k in 0.. {
                let start_sec = iv.onset + k as f64 * stride;
                if start_sec + window_sec > iv.offset + 1e-9 {
                    break;
                }
                let start = (start_sec * fs).round() as usize;
                if fits(start) {
                    seizures.push(segment_at(rec, start, n, 1));
                }
            }
        }
        if seizures.is_empty() {
            continue;
        }

        let mut candidates = Vec::new();
        for k in 0.. {
            let start = (k as f64 * stride * fs).round() as usize;
            if !fits(start) {
                break;
            }
            let start_sec = start as f64 / fs;
            if ann.distance_to_seizure(start_sec, start_sec + window_sec)
                >= protocol.interictal_margin_sec
            {
                candidates.push(start);
            }
        }
        let wanted = seizures.len() * protocol.nonseizure_ratio;
        if candidates.len() < wanted {
            warn!(
                "{}: {} nonseizure windows requested, only {} available",
                rec.id(),
                wanted,
                candidates.len()
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
        rng.set_stream(index as u64);
        let mut picks = sample(&mut rng, candidates.len(), wanted.min(candidates.len())).into_vec();
        picks.sort_unstable();

        corpus.extend(seizures);
        corpus.extend(
            picks
                .into_iter()
                .map(|i| segment_at(rec, candidates[i], n, 0)),
        );
    }
    Ok(corpus)
}
