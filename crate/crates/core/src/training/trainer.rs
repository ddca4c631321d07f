use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loso::LosoSplit;
use super::protocol::TrainProtocol;
use crate::dsp::Segment;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, MrEegWaveNet};
use crate::nn::ops::weighted_nll_loss;
use crate::nn::{Adam, Module, Tensor};

/// Segments per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{:.9},{:.9}", r.epoch, r.train_loss, r.val_loss);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub segment_id: String,
    pub label: u8,
    pub log_prob_seizure: f64,
    pub features: Vec<f64>,
}

/// SplitMix64 finalizer, used to derive independent per-job seeds.
pub(crate) fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one LOSO job, a function of the protocol seed, run and test patient.
pub fn job_seed(seed: u64, split: &LosoSplit) -> u64 {
    let patient = split
        .test_patient_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        });
    mix_seed(mix_seed(seed ^ mix_seed(split.run_index as u64)) ^ patient)
}

/// Stratified split of `labels` indices into (train, validation), drawing
/// `round(val_fraction * n_class)` validation items from each class.
pub fn stratified_split(labels: &[u8], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_val = (val_fraction * idx.len() as f64).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Stacks segments into a `(B, C, N)` tensor.
pub fn batch_tensor(segments: &[&Segment]) -> Result<Tensor> {
    let first = segments.first().ok_or_else(|| Error::dim("empty batch"))?;
    let (c, n) = (first.n_channels, first.n_samples);
    let mut data = Vec::with_capacity(segments.len() * c * n);
    for s in segments {
        if s.n_channels != c || s.n_samples != n {
            return Err(Error::dim(format!(
                "segment {} is {}x{}, batch expects {c}x{n}",
                s.id(),
                s.n_channels,
                s.n_samples
            )));
        }
        data.extend(s.data.iter().map(|&v| v as f64));
    }
    Tensor::from_vec(&[segments.len(), c, n], data)
}

/// Weighted-mean NLL over `segments` in eval mode.
pub fn evaluate_loss(
    model: &mut MrEegWaveNet,
    segments: &[&Segment],
    weights: &[f64; 2],
) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for chunk in segments.chunks(EVAL_CHUNK) {
        let (lp, _) = model.forward(&batch_tensor(chunk)?, false)?;
        let targets: Vec<u8> = chunk.iter().map(|s| s.label).collect();
        let (loss, _) = weighted_nll_loss(&lp, &targets, weights)?;
        let w: f64 = targets.iter().map(|&t| weights[t as usize]).sum();
        num += loss * w;
        den += w;
    }
    Ok(num / den)
}

/// Training and validation segments of one LOSO job.
#[derive(Debug, Clone)]
pub struct JobPartition<'a> {
    pub train: Vec<&'a Segment>,
    pub val: Vec<&'a Segment>,
}

/// Splits the corpus segments of `split.train_patient_ids` into stratified
/// training and validation sets.
pub fn job_partition<'a>(
    split: &LosoSplit,
    corpus: &'a [Segment],
    protocol: &TrainProtocol,
) -> Result<JobPartition<'a>> {
    let pool: Vec<&Segment> = corpus
        .iter()
        .filter(|s| split.train_patient_ids.contains(&s.patient_id))
        .collect();
    if pool.iter().any(|s| s.patient_id == split.test_patient_id) {
        return Err(Error::config(format!(
            "test patient {} is listed among training patients",
            split.test_patient_id
        )));
    }
    let labels: Vec<u8> = pool.iter().map(|s| s.label).collect();
    let seed = mix_seed(job_seed(protocol.seed, split) ^ 1);
    let (train_idx, val_idx) = stratified_split(&labels, protocol.val_fraction, seed);
    if val_idx.is_empty() {
        return Err(Error::config(format!(
            "validation set for {} is empty ({} training segments)",
            split.job_name(),
            pool.len()
        )));
    }
    if train_idx.len() < 2 {
        return Err(Error::config(format!(
            "{}: fewer than 2 training segments",
            split.job_name()
        )));
    }
    Ok(JobPartition {
        train: train_idx.iter().map(|&i| pool[i]).collect(),
        val: val_idx.iter().map(|&i| pool[i]).collect(),
    })
}

/// Trains a freshly initialized model for `split`.
pub fn train(
    split: &LosoSplit,
    corpus: &[Segment],
    config: &ModelConfig,
    protocol: &TrainProtocol,
) -> Result<(MrEegWaveNet, TrainTrace)> {
    let seed = job_seed(protocol.seed, split);
    let model = MrEegWaveNet::new(config.clone(), seed)?;
    train_from(model, split, corpus, protocol)
}

/// Trains `model` on the corpus segments of `split.train_patient_ids`,
/// stopping after `patience` epochs without a strictly lower validation loss.
/// Returns the parameters of the best validation epoch.
pub fn train_from(
    mut model: MrEegWaveNet,
    split: &LosoSplit,
    corpus: &[Segment],
    protocol: &TrainProtocol,
) -> Result<(MrEegWaveNet, TrainTrace)> {
    protocol.validate()?;
    let seed = job_seed(protocol.seed, split);
    let JobPartition { train, val } = job_partition(split, corpus, protocol)?;
    let weights = protocol.class_weights;

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 2));
    let mut optimizer = Adam::new(protocol.learning_rate);
    let mut trace = TrainTrace::default();
    let mut best = (f64::INFINITY, model.snapshot());
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=protocol.max_epochs {
        order.shuffle(&mut rng);
        let (mut num, mut den) = (0.0, 0.0);
        for (b, chunk) in order.chunks(protocol.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&Segment> = chunk.iter().map(|&i| train[i]).collect();
            let targets: Vec<u8> = batch.iter().map(|s| s.label).collect();
            let (lp, _) = model.forward(&batch_tensor(&batch)?, true)?;
            let (loss, grad) = weighted_nll_loss(&lp, &targets, &weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{}: loss {loss} at epoch {epoch}, batch {}",
                    split.job_name(),
                    b + 1
                )));
            }
            model.zero_grad();
            model.backward(&grad)?;
            optimizer.step(&mut model);
            let w: f64 = targets.iter().map(|&t| weights[t as usize]).sum();
            num += loss * w;
            den += w;
        }
        let train_loss = num / den;
        let val_loss = evaluate_loss(&mut model, &val, &weights)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: validation loss {val_loss} at epoch {epoch}",
                split.job_name()
            )));
        }
        debug!(
            "{} epoch {epoch}: train {train_loss:.5} val {val_loss:.5}",
            split.job_name()
        );
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, model.snapshot());
            trace.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= protocol.patience {
                break;
            }
        }
    }
    info!(
        "{}: {} epochs, best epoch {} (val loss {:.5})",
        split.job_name(),
        trace.epochs.len(),
        trace.best_epoch,
        best.0
    );
    model.restore(&best.1);
    Ok((model, trace))
}

/// Eval-mode predictions in segment order.
pub fn predict_segments(model: &mut MrEegWaveNet, segments: &[Segment]) -> Result<Vec<Prediction>> {
    let expected = model.config().window_len();
    let mut out = Vec::with_capacity(segments.len());
    let refs: Vec<&Segment> = segments.iter().collect();
    for chunk in refs.chunks(EVAL_CHUNK) {
        if let Some(bad) = chunk.iter().find(|s| s.n_samples != expected) {
            return Err(Error::dim(format!(
                "segment {} has {} samples, model window is {expected}",
                bad.id(),
                bad.n_samples
            )));
        }
        let (lp, feats) = model.forward(&batch_tensor(chunk)?, false)?;
        let k = feats.dim(1);
        for (i, s) in chunk.iter().enumerate() {
            let (l0, l1) = (lp.data()[2 * i], lp.data()[2 * i + 1]);
            out.push(Prediction {
                segment_id: s.id(),
                label: u8::from(l1 > l0),
                log_prob_seizure: l1,
                features: feats.data()[i * k..(i + 1) * k].to_vec(),
            });
        }
    }
    Ok(out)
}
