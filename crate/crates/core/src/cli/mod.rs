//! The `preprocess`, `train`, `evaluate` and `synth` commands.

mod config;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{error, info, warn};
use serde::{Deserialize, Serialize};

pub use config::{
    DatasetConfig, ModelSection, OutputConfig, PostprocConfig, PreprocessConfig, Representation,
    RunConfig, Scope,
};
pub use store::SegmentStore;

use crate::data_io::{
    generate_synthetic, read_annotations, read_edf, write_annotations, write_edf, AnnotationSet,
    Interval, Recording,
};
use crate::dsp::{apply_zero_phase, resample, segmentize, Segment};
use crate::ecod::{ecod_scores, fuse_labels, threshold_rule};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, detection_ratio, Detection, EvalReport, PatientRow};
use crate::model::{ModelConfig, MrEegWaveNet};
use crate::training::{
    build_train_corpus, make_loso_splits, predict_segments, train, LosoSplit, TrainProtocol,
};

pub const TEST_STORE: &str = "segments_test.bin";
pub const TRAIN_STORE: &str = "segments_train.bin";
pub const RECORDINGS_FILE: &str = "recordings.json";
pub const MODEL_CONFIG_FILE: &str = "model_config.json";

/// A loaded config plus command-line overrides.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Context {
    pub fn new(
        mut config: RunConfig,
        seed: Option<u64>,
        output: Option<PathBuf>,
        jobs: usize,
    ) -> Result<Self> {
        if let Some(seed) = seed {
            config.seed = seed;
        }
        // The run seed drives corpus sampling, splits and initialization.
        config.training.seed = config.seed;
        config.validate()?;
        let out_dir = output.unwrap_or_else(|| config.output.dir.clone());
        Ok(Context {
            config,
            out_dir,
            jobs: jobs.max(1),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn protocol(&self) -> &TrainProtocol {
        &self.config.training
    }
}

/// Recording metadata kept next to the segment stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: String,
    pub patient_id: String,
    pub duration_sec: f64,
    pub seizures: Vec<(f64, f64)>,
}

impl RecordingMeta {
    fn annotations(&self) -> Result<AnnotationSet> {
        AnnotationSet::new(
            self.recording_id.clone(),
            self.seizures
                .iter()
                .map(|&(a, b)| Interval::new(a, b))
                .collect(),
        )
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Loads every recording with its annotations, reporting all unreadable
/// files at once.
pub fn load_dataset(config: &RunConfig) -> Result<(Vec<Recording>, Vec<AnnotationSet>)> {
    if let Some(spec) = &config.dataset.synthetic {
        return generate_synthetic(spec);
    }
    let (mut recordings, mut annotations, mut problems) = (Vec::new(), Vec::new(), Vec::new());
    for (edf, csv) in config.recording_paths() {
        let rec = read_edf(&edf).map_err(|e| with_path(&edf, e));
        let ann = read_annotations(&csv).map_err(|e| with_path(&csv, e));
        match (rec, ann) {
            (Ok(rec), Ok(ann)) => {
                let ann = if ann.recording_id == rec.id() {
                    ann
                } else {
                    AnnotationSet::new(rec.id(), ann.intervals)?
                };
                if let Err(e) = ann.validate(rec.duration_sec()) {
                    problems.push(format!("{}: {e}", csv.display()));
                    continue;
                }
                recordings.push(rec);
                annotations.push(ann);
            }
            (rec, ann) => problems.extend(rec.err().into_iter().chain(ann.err())),
        }
    }
    if !problems.is_empty() {
        return Err(Error::config(format!(
            "unreadable inputs:\n  {}",
            problems.join("\n  ")
        )));
    }
    Ok((recordings, annotations))
}

fn with_path(path: &Path, e: Error) -> String {
    let (msg, shown) = (e.to_string(), path.display().to_string());
    if msg.contains(&shown) {
        msg
    } else {
        format!("{shown}: {msg}")
    }
}

fn preprocess_recording(rec: &Recording, cfg: &PreprocessConfig) -> Result<Recording> {
    let resampled = |r: &Recording| match cfg.target_rate {
        Some(rate) => resample(r, rate),
        None => Ok(r.clone()),
    };
    if cfg.filter_before_resample {
        resampled(&apply_zero_phase(rec, &cfg.filters)?)
    } else {
        apply_zero_phase(&resampled(rec)?, &cfg.filters)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub recordings: usize,
    pub test_segments: usize,
    pub train_segments: usize,
}

/// Filters and resamples every recording, then writes the non-overlapping
/// test store, the class-balanced training store and their metadata.
pub fn cmd_preprocess(ctx: &Context) -> Result<PreprocessSummary> {
    let cfg = &ctx.config;
    let (raw, annotations) = load_dataset(cfg)?;
    let recordings = raw
        .iter()
        .map(|r| preprocess_recording(r, &cfg.preprocess))
        .collect::<Result<Vec<_>>>()?;
    let first = recordings
        .first()
        .ok_or_else(|| Error::config("dataset contains no recordings"))?;
    let (channels, rate) = (first.n_channels(), first.sample_rate);
    if let Some(r) = recordings
        .iter()
        .find(|r| r.n_channels() != channels || (r.sample_rate - rate).abs() > 1e-9)
    {
        return Err(Error::config(format!(
            "recording {} has {} channels at {} Hz; expected {channels} at {rate} Hz (set preprocess.target_rate)",
            r.id(),
            r.n_channels(),
            r.sample_rate
        )));
    }
    let model = model_config(cfg, channels, rate);
    model.validate()?;

    let mut test = Vec::new();
    for (rec, ann) in recordings.iter().zip(&annotations) {
        test.extend(segmentize(rec, ann, model.window_sec, 0.0)?);
    }
    let corpus = build_train_corpus(&recordings, &annotations, ctx.protocol(), model.window_sec)?;
    let n = model.window_len();

    create_dir(&ctx.out_dir)?;
    let summary = PreprocessSummary {
        recordings: recordings.len(),
        test_segments: test.len(),
        train_segments: corpus.len(),
    };
    SegmentStore::new(channels, n, rate, test)?.write(&ctx.path(TEST_STORE))?;
    SegmentStore::new(channels, n, rate, corpus)?.write(&ctx.path(TRAIN_STORE))?;
    let meta: Vec<RecordingMeta> = recordings
        .iter()
        .zip(&annotations)
        .map(|(r, a)| RecordingMeta {
            recording_id: r.id().to_string(),
            patient_id: r.patient_id.clone(),
            duration_sec: r.duration_sec(),
            seizures: a.intervals.iter().map(|iv| (iv.onset, iv.offset)).collect(),
        })
        .collect();
    write_json(&ctx.path(RECORDINGS_FILE), &meta)?;
    write_json(&ctx.path(MODEL_CONFIG_FILE), &model)?;
    info!(
        "preprocessed {} recordings: {} test segments, {} training segments",
        summary.recordings, summary.test_segments, summary.train_segments
    );
    Ok(summary)
}

fn model_config(cfg: &RunConfig, channels: usize, sample_rate: f64) -> ModelConfig {
    ModelConfig {
        window_sec: cfg.model.window_sec,
        resolutions: cfg.model.resolutions.clone(),
        feature_width: cfg.model.feature_width,
        channels,
        sample_rate,
        leaky_slope: cfg.model.leaky_slope,
    }
}

fn patient_ids(meta: &[RecordingMeta]) -> Vec<String> {
    meta.iter()
        .map(|m| m.patient_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn checkpoint_path(ctx: &Context, split: &LosoSplit) -> PathBuf {
    ctx.path("models").join(format!("{}.bin", split.job_name()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSummary {
    pub trained: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

/// Trains every LOSO job without a checkpoint yet, `ctx.jobs` at a time.
pub fn cmd_train(ctx: &Context) -> Result<TrainSummary> {
    let store = SegmentStore::read(&ctx.path(TRAIN_STORE))?;
    let meta: Vec<RecordingMeta> = read_json(&ctx.path(RECORDINGS_FILE))?;
    let model: ModelConfig = read_json(&ctx.path(MODEL_CONFIG_FILE))?;
    let splits = make_loso_splits(&patient_ids(&meta), ctx.protocol().runs_per_patient)?;
    for dir in ["models", "traces"] {
        create_dir(&ctx.path(dir))?;
    }
    write_json(&ctx.path("splits.json"), &splits)?;

    let mut summary = TrainSummary::default();
    let pending: Vec<&LosoSplit> = splits
        .iter()
        .filter(|s| {
            let done = checkpoint_path(ctx, s).exists();
            if done {
                summary.skipped.push(s.job_name());
            }
            !done
        })
        .collect();
    info!(
        "{} jobs to train, {} already complete",
        pending.len(),
        summary.skipped.len()
    );

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..ctx.jobs.min(pending.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(split) = pending.get(i) else { break };
                let outcome = run_job(ctx, split, &store.segments, &model);
                if let Err(e) = &outcome {
                    error!("{} failed: {e}", split.job_name());
                }
                results.lock().expect("worker panicked").push((i, outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("worker panicked");
    results.sort_by_key(|(i, _)| *i);
    for (i, outcome) in results {
        let name = pending[i].job_name();
        match outcome {
            Ok(()) => summary.trained.push(name),
            Err(e) => summary.failed.push((name, e.to_string())),
        }
    }
    Ok(summary)
}

fn run_job(
    ctx: &Context,
    split: &LosoSplit,
    corpus: &[Segment],
    model: &ModelConfig,
) -> Result<()> {
    let (net, trace) = train(split, corpus, model, ctx.protocol())?;
    trace.write_csv(&ctx.path("traces").join(format!("{}.csv", split.job_name())))?;
    let dest = checkpoint_path(ctx, split);
    let tmp = dest.with_extension("tmp");
    net.save(&tmp)?;
    std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
}

/// Paired plain and post-processed reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub plain: EvalReport,
    pub post_processed: Option<EvalReport>,
}

/// Per-channel standard deviation, mean absolute first difference and peak
/// absolute value.
pub fn raw_stats(segment: &Segment) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * segment.n_channels);
    for c in 0..segment.n_channels {
        let x = segment.channel(c);
        let n = x.len() as f64;
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let line = x
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() as f64)
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        let peak = x.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
        out.extend([var.sqrt(), line, peak]);
    }
    out
}

/// Anomaly scores and flags for `rows`, one population per group key.
fn anomaly_flags(rows: &[Vec<f64>], groups: &[&str]) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    let mut scores = vec![0.0; rows.len()];
    let mut flags = vec![0u8; rows.len()];
    for idx in by_group.values() {
        if idx.len() < 2 {
            continue;
        }
        let subset: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let result = threshold_rule(&ecod_scores(&subset)?);
        for (k, &i) in idx.iter().enumerate() {
            scores[i] = result.scores[k];
            flags[i] = result.flags[k];
        }
    }
    Ok((scores, flags))
}

fn csv_row(out: &mut String, id: &str, values: impl Iterator<Item = String>) {
    out.push_str(id);
    for v in values {
        out.push(',');
        out.push_str(&v);
    }
    out.push('\n');
}

/// Evaluates every LOSO checkpoint on its test patient and writes
/// `report.json`, `report.txt` and the optional score and feature exports.
pub fn cmd_evaluate(ctx: &Context) -> Result<EvaluationOutput> {
    let store = SegmentStore::read(&ctx.path(TEST_STORE))?;
    let meta: Vec<RecordingMeta> = read_json(&ctx.path(RECORDINGS_FILE))?;
    let patients = patient_ids(&meta);
    let splits = make_loso_splits(&patients, ctx.protocol().runs_per_patient)?;
    let post = &ctx.config.postproc;
    let out = &ctx.config.output;
    if out.export_scores {
        create_dir(&ctx.path("scores"))?;
    }
    if out.export_features {
        create_dir(&ctx.path("features"))?;
    }

    let window = store.n_samples as f64 / store.sample_rate;
    let mut plain_runs: Vec<Vec<PatientRow>> = vec![Vec::new(); ctx.protocol().runs_per_patient];
    let mut post_runs = plain_runs.clone();
    for split in &splits {
        let path = checkpoint_path(ctx, split);
        if !path.exists() {
            return Err(Error::config(format!(
                "missing checkpoint for split {} ({})",
                split.job_name(),
                path.display()
            )));
        }
        let mut net = MrEegWaveNet::load(&path)?;
        let segments: Vec<Segment> = store
            .segments
            .iter()
            .filter(|s| s.patient_id == split.test_patient_id)
            .cloned()
            .collect();
        if segments.is_empty() {
            return Err(Error::config(format!(
                "no test segments for patient {}",
                split.test_patient_id
            )));
        }
        let preds = predict_segments(&mut net, &segments)?;
        let truth: Vec<u8> = segments.iter().map(|s| s.label).collect();
        let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
        let probs: Vec<f64> = preds.iter().map(|p| p.log_prob_seizure.exp()).collect();

        let mut detection = Detection {
            detected: 0,
            events: 0,
        };
        let mut detection_post = detection;
        let rows: Vec<Vec<f64>> = match post.representation {
            Representation::Features => preds.iter().map(|p| p.features.clone()).collect(),
            Representation::RawStats => segments.iter().map(raw_stats).collect(),
        };
        let groups: Vec<&str> = segments
            .iter()
            .map(|s| match post.scope {
                Scope::Session => s.recording_id.as_str(),
                Scope::Patient => s.patient_id.as_str(),
            })
            .collect();
        let (scores, flags) = anomaly_flags(&rows, &groups)?;
        let fused = fuse_labels(&labels, &flags)?;

        for m in meta
            .iter()
            .filter(|m| m.patient_id == split.test_patient_id)
        {
            let idx: Vec<usize> = (0..segments.len())
                .filter(|&i| segments[i].recording_id == m.recording_id)
                .collect();
            let spans: Vec<(f64, f64)> = idx
                .iter()
                .map(|&i| (segments[i].start_sec, segments[i].start_sec + window))
                .collect();
            let ann = m.annotations()?;
            let pick = |v: &[u8]| idx.iter().map(|&i| v[i]).collect::<Vec<u8>>();
            detection = detection + detection_ratio(&pick(&labels), &spans, &ann)?;
            detection_post = detection_post + detection_ratio(&pick(&fused), &spans, &ann)?;
        }

        let pid = &split.test_patient_id;
        let (row, _) = PatientRow::from_predictions(pid, &labels, &truth, &probs, detection)?;
        let (row_post, _) =
            PatientRow::from_predictions(pid, &fused, &truth, &probs, detection_post)?;
        plain_runs[split.run_index].push(row);
        post_runs[split.run_index].push(row_post);

        if out.export_scores {
            let mut csv = String::from("segment_id,score,flag\n");
            for (i, p) in preds.iter().enumerate() {
                let _ = writeln!(csv, "{},{},{}", p.segment_id, scores[i], flags[i]);
            }
            write_text(
                &ctx.path("scores").join(format!("{}.csv", split.job_name())),
                &csv,
            )?;
        }
        if out.export_features {
            let k = preds.first().map_or(0, |p| p.features.len());
            let mut csv = String::from("segment_id,label");
            for j in 0..k {
                let _ = write!(csv, ",f{j}");
            }
            csv.push('\n');
            for (p, s) in preds.iter().zip(&segments) {
                csv_row(
                    &mut csv,
                    &p.segment_id,
                    std::iter::once(s.label.to_string())
                        .chain(p.features.iter().map(|v| v.to_string())),
                );
            }
            write_text(
                &ctx.path("features")
                    .join(format!("{}.csv", split.job_name())),
                &csv,
            )?;
        }
    }

    let output = EvaluationOutput {
        plain: aggregate(&plain_runs)?,
        post_processed: if post.enabled {
            Some(aggregate(&post_runs)?)
        } else {
            None
        },
    };
    write_json(&ctx.path("report.json"), &output)?;
    let mut table = output.plain.to_table("Without post-processing");
    if let Some(p) = &output.post_processed {
        table.push('\n');
        table.push_str(&p.to_table("With post-processing"));
    }
    write_text(&ctx.path("report.txt"), &table)?;
    Ok(output)
}

/// Writes the configured synthetic corpus as EDF recordings with CSV annotations.
pub fn cmd_synth(ctx: &Context) -> Result<Vec<PathBuf>> {
    let spec = ctx
        .config
        .dataset
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::config("synth needs a [dataset.synthetic] section"))?;
    let (recordings, annotations) = generate_synthetic(spec)?;
    create_dir(&ctx.out_dir)?;
    let mut written = Vec::new();
    for (rec, ann) in recordings.iter().zip(&annotations) {
        let edf = ctx.path(&format!("{}.edf", rec.id()));
        write_edf(rec, &edf, 1.0)?;
        write_annotations(ann, edf.with_extension("csv"))?;
        written.push(edf);
    }
    if written.is_empty() {
        warn!("synthetic spec produced no recordings");
    }
    Ok(written)
}
