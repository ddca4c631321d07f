//! Acceptance criteria 1 to 9, one PASS/FAIL line each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use mrwave::cli::{
    cmd_evaluate, cmd_preprocess, cmd_train, EvaluationOutput, RECORDINGS_FILE, TRAIN_STORE,
};
use mrwave::cli::{RecordingMeta, SegmentStore};
use mrwave::data_io::Recording;
use mrwave::dsp::{apply_zero_phase, resample, FilterSpec};
use mrwave::ecod::{ecod_scores, fuse_labels, threshold_rule};
use mrwave::evaluation::{aggregate, confusion, metrics, roc_auc, ConfusionCounts, PatientRow};
use mrwave::model::{feature_length, ModelConfig, MrEegWaveNet, BLOCK_WIDTH, N_BLOCKS};
use mrwave::nn::ops::weighted_nll_loss;
use mrwave::nn::{
    grad_check, grad_check_piecewise, BatchNorm1d, Conv1d, GlobalAvgPool, GradCheckOptions,
    LeakyRelu, Linear, LogSoftmax, Module, Param, Sigmoid, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shape_is(t: &Tensor, expected: &[usize], what: &str) -> Result<(), String> {
    ensure(t.shape() == expected, || {
        format!("{what}: shape {:?}, expected {expected:?}", t.shape())
    })
}

fn criterion_1() -> Outcome {
    let config = ModelConfig::new(10.0, vec![10.0, 2.0], 19, 500.0);
    let mut model = MrEegWaveNet::new(config.clone(), 1).map_err(|e| e.to_string())?;
    ensure(feature_length(&config) == 192, || {
        format!("feature_length = {}", feature_length(&config))
    })?;

    let x = random_tensor(&[2, 19, 5000], 3, 1.0);
    let (lp, feats) = model.forward(&x, false).map_err(|e| e.to_string())?;
    shape_is(&feats, &[2, 192], "features")?;
    shape_is(&lp, &[2, 2], "log-probabilities")?;

    let branch = &mut model.branches[0];
    let scales = branch.multiscale.forward(&x).map_err(|e| e.to_string())?;
    let lengths: Vec<usize> = scales.iter().map(|s| s.dim(2)).collect();
    ensure(lengths == [2500, 1250, 625, 312, 156, 78], || {
        format!("scale lengths {lengths:?}")
    })?;
    let mut concat = 0;
    for (block, scale) in branch.blocks.iter_mut().zip(&scales[1..]) {
        let l = scale.dim(2);
        let h1 = block.conv1.forward(scale).map_err(|e| e.to_string())?;
        shape_is(&h1, &[2, BLOCK_WIDTH, l - 3], "first block convolution")?;
        let h2 = block.conv2.forward(&h1).map_err(|e| e.to_string())?;
        shape_is(&h2, &[2, BLOCK_WIDTH, l - 6], "second block convolution")?;
        let pooled = block.forward(scale, false).map_err(|e| e.to_string())?;
        concat += pooled.dim(1);
    }
    ensure(concat == 160 && N_BLOCKS * BLOCK_WIDTH == 160, || {
        format!("branch concat width {concat}")
    })?;
    Ok("K = 192, scales 2500..78, block widths L-3 / L-6, branch concat 160".into())
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rates = [64.0, 100.0, 128.0, 200.0, 256.0];
    let windows = [2.0, 4.0, 5.0, 6.0, 8.0, 10.0];
    let mut checked = 0;
    while checked < 200 {
        let fs = rates[rng.random_range(0..rates.len())];
        let w: f64 = windows[rng.random_range(0..windows.len())];
        let mut ds = vec![w];
        for _ in 0..rng.random_range(0..4) {
            // Divisors and non-divisors of the window alike.
            let d = (w * rng.random_range(0.15..0.95) * 4.0).round() / 4.0;
            if d > 0.0 && !ds.iter().any(|&x| (x - d).abs() < 1e-9) {
                ds.push(d);
            }
        }
        ds.sort_by(|a, b| b.total_cmp(a));
        let mut config = ModelConfig::new(w, ds.clone(), rng.random_range(1..=3), fs);
        config.feature_width = rng.random_range(1..=40);
        if config.validate().is_err() {
            continue;
        }
        let expected: usize = ds
            .iter()
            .map(|&d| config.feature_width * (w / d + 1e-9).floor() as usize)
            .sum();
        let mut model = MrEegWaveNet::new(config.clone(), checked).map_err(|e| e.to_string())?;
        let x = random_tensor(&[1, config.channels, config.window_len()], checked, 1.0);
        let (_, feats) = model.forward(&x, false).map_err(|e| e.to_string())?;
        let k = feature_length(&config);
        ensure(k == feats.dim(1) && k == expected, || {
            format!(
                "W={w} D={ds:?} F={}: feature_length {k}, forward {}, expected {expected}",
                config.feature_width,
                feats.dim(1)
            )
        })?;
        checked += 1;
    }
    Ok(format!("{checked} random configurations agree"))
}

/// One layer between a trainable input and a fixed random projection, so a
/// single gradient check covers its parameters and its input gradient.
#[allow(clippy::large_enum_variant)]
enum Layer {
    Conv(Conv1d),
    Linear(Linear),
    Bn(BatchNorm1d),
    Leaky(LeakyRelu),
    Sigmoid(Sigmoid),
    Pool(GlobalAvgPool),
    LogSoftmax(LogSoftmax),
}

struct Probe {
    input: Param,
    layer: Layer,
    projection: Option<Tensor>,
}

impl Module for Probe {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.input);
        match &self.layer {
            Layer::Conv(l) => l.visit_params(f),
            Layer::Linear(l) => l.visit_params(f),
            Layer::Bn(l) => l.visit_params(f),
            _ => {}
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.input);
        match &mut self.layer {
            Layer::Conv(l) => l.visit_params_mut(f),
            Layer::Linear(l) => l.visit_params_mut(f),
            Layer::Bn(l) => l.visit_params_mut(f),
            _ => {}
        }
    }
}

fn probe_loss(p: &mut Probe, backward: bool) -> mrwave::Result<f64> {
    let x = p.input.value.clone();
    let y = match &mut p.layer {
        Layer::Conv(l) => l.forward(&x)?,
        Layer::Linear(l) => l.forward(&x)?,
        Layer::Bn(l) => l.forward(&x, true)?,
        Layer::Leaky(l) => l.forward(&x),
        Layer::Sigmoid(l) => l.forward(&x),
        Layer::Pool(l) => l.forward(&x)?,
        Layer::LogSoftmax(l) => l.forward(&x)?,
    };
    let proj = p
        .projection
        .get_or_insert_with(|| random_tensor(y.shape(), 99, 1.0))
        .clone();
    let loss = y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum();
    if backward {
        let dx = match &mut p.layer {
            Layer::Conv(l) => l.backward(&proj)?,
            Layer::Linear(l) => l.backward(&proj)?,
            Layer::Bn(l) => l.backward(&proj)?,
            Layer::Leaky(l) => l.backward(&proj)?,
            Layer::Sigmoid(l) => l.backward(&proj)?,
            Layer::Pool(l) => l.backward(&proj)?,
            Layer::LogSoftmax(l) => l.backward(&proj)?,
        };
        for (g, d) in p.input.grad.data_mut().iter_mut().zip(dx.data()) {
            *g += d;
        }
    }
    Ok(loss)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layers: Vec<(&str, Vec<usize>, Layer)> = vec![
        (
            "depthwise conv",
            vec![2, 4, 16],
            Layer::Conv(Conv1d::new("c", 4, 4, 2, 2, 4, &mut rng)),
        ),
        (
            "dense conv",
            vec![2, 4, 16],
            Layer::Conv(Conv1d::new("c", 4, 6, 4, 1, 1, &mut rng)),
        ),
        (
            "linear",
            vec![3, 10],
            Layer::Linear(Linear::new("l", 10, 5, &mut rng)),
        ),
        (
            "batch norm 3-D",
            vec![3, 4, 7],
            Layer::Bn(BatchNorm1d::new("b", 4)),
        ),
        (
            "batch norm 2-D",
            vec![6, 5],
            Layer::Bn(BatchNorm1d::new("b", 5)),
        ),
        ("leaky relu", vec![3, 8], Layer::Leaky(LeakyRelu::new(0.01))),
        ("sigmoid", vec![3, 8], Layer::Sigmoid(Sigmoid::default())),
        (
            "global average pool",
            vec![2, 3, 9],
            Layer::Pool(GlobalAvgPool::default()),
        ),
        (
            "log-softmax",
            vec![4, 2],
            Layer::LogSoftmax(LogSoftmax::default()),
        ),
    ];
    let mut worst_layer = 0.0f64;
    for (i, (name, shape, layer)) in layers.into_iter().enumerate() {
        let mut probe = Probe {
            input: Param::new("input", random_tensor(&shape, 40 + i as u64, 1.5)),
            layer,
            projection: None,
        };
        let report = grad_check(&mut probe, probe_loss, &GradCheckOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(report.passed(1e-6), || {
            format!(
                "{name}: rel err {:.3e} {:?}",
                report.max_rel_err, report.failures
            )
        })?;
        worst_layer = worst_layer.max(report.max_rel_err);
    }

    let config = ModelConfig::new(4.0, vec![4.0, 2.0], 3, 256.0);
    let mut model = MrEegWaveNet::new(config, 5).map_err(|e| e.to_string())?;
    let x = random_tensor(&[3, 3, 1024], 6, 1.0);
    let y = [0u8, 1, 1];
    let shadowed = model.bn_shadowed_params();
    let opts = GradCheckOptions {
        probes_per_param: Some(4),
        largest_first: true,
        max_attempts: 16,
        skip: shadowed.clone(),
        seed: 1,
        ..GradCheckOptions::default()
    };
    let loss = |m: &mut MrEegWaveNet, bw: bool| {
        let (lp, _) = m.forward(&x, true)?;
        let (l, g) = weighted_nll_loss(&lp, &y, &[0.75, 1.5])?;
        if bw {
            m.backward(&g)?;
        }
        Ok(l)
    };
    let report = grad_check_piecewise(&mut model, loss, |m| m.activation_signature(), &opts)
        .map_err(|e| e.to_string())?;
    let worst = report.worst().map(|g| g.name.clone()).unwrap_or_default();
    ensure(report.passed(1e-4), || {
        format!("full model: rel err {:.3e} at {worst}", report.max_rel_err)
    })?;
    let mut shadow_max = 0.0f64;
    model.visit_params(&mut |p| {
        if shadowed.contains(&p.name) {
            shadow_max = p.grad.data().iter().fold(shadow_max, |m, g| m.max(g.abs()));
        }
    });
    ensure(shadow_max < 1e-12, || {
        format!("bias before batch norm has gradient {shadow_max:e}")
    })?;
    Ok(format!(
        "layers max {worst_layer:.2e} (< 1e-6), full model max {:.2e} (< 1e-4)",
        report.max_rel_err
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let m = rng.random_range(2..=200);
        let p = rng.random_range(1..=40);
        let coarse = trial % 4 == 0;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..p)
                    .map(|_| {
                        let v: f64 = rng.random_range(-2.0..2.0);
                        if coarse {
                            v.round()
                        } else {
                            v * v.abs()
                        }
                    })
                    .collect()
            })
            .collect();
        let fast = ecod_scores(&rows).map_err(|e| e.to_string())?;
        for (a, e) in fast.iter().zip(brute_ecod(&rows)) {
            worst = worst.max((a - e).abs());
        }
    }
    ensure(worst < 1e-12, || {
        format!("max deviation from counting oracle {worst:e}")
    })?;

    let rows: Vec<Vec<f64>> = (1..=5).map(|v| vec![v as f64]).collect();
    let r = threshold_rule(&ecod_scores(&rows).map_err(|e| e.to_string())?);
    let expected = [1.609, 0.916, 0.511, 0.916, 1.609];
    ensure(
        r.scores
            .iter()
            .zip(expected)
            .all(|(a, e)| (a - e).abs() < 5e-4),
        || format!("worked example scores {:?}", r.scores),
    )?;
    ensure(r.flags == [1, 0, 0, 0, 1], || {
        format!("worked example flags {:?}", r.flags)
    })?;
    Ok(format!(
        "50 matrices within {worst:.1e}; worked example matches"
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..300 {
        let m = rng.random_range(2..150);
        let truth: Vec<u8> = (0..m)
            .map(|_| u8::from(rng.random_range(0.0..1.0) < 0.3))
            .collect();
        let labels: Vec<u8> = truth
            .iter()
            .map(|&t| {
                if rng.random_range(0.0..1.0) < 0.7 {
                    t
                } else {
                    1 - t
                }
            })
            .collect();
        let feats: Vec<Vec<f64>> = truth
            .iter()
            .map(|&t| {
                (0..4)
                    .map(|_| rng.random_range(-1.0..1.0) + 2.0 * t as f64)
                    .collect()
            })
            .collect();
        let flags = threshold_rule(&ecod_scores(&feats).map_err(|e| e.to_string())?).flags;
        let fused = fuse_labels(&labels, &flags).map_err(|e| e.to_string())?;
        let plain = metrics(&confusion(&labels, &truth).map_err(|e| e.to_string())?);
        let post = metrics(&confusion(&fused, &truth).map_err(|e| e.to_string())?);
        ensure(
            post.specificity >= plain.specificity && post.recall <= plain.recall,
            || {
                format!(
                    "set {set}: specificity {} -> {}, recall {} -> {}",
                    plain.specificity, post.specificity, plain.recall, post.recall
                )
            },
        )?;
    }
    Ok("300 prediction sets: specificity never drops, recall never rises".into())
}

const PUBLISHED_ROWS: [(f64, f64, f64, f64, f64, f64); 14] = [
    (86.96, 91.03, 99.68, 0.888, 0.998, 1.000),
    (30.89, 100.00, 98.11, 0.405, 0.999, 1.000),
    (2.39, 90.91, 90.30, 0.047, 0.952, 1.000),
    (2.15, 55.56, 89.35, 0.041, 0.966, 1.000),
    (47.09, 76.25, 99.52, 0.581, 0.991, 1.000),
    (2.05, 87.78, 92.24, 0.040, 0.963, 1.000),
    (73.78, 88.41, 99.81, 0.801, 0.995, 1.000),
    (13.02, 40.07, 97.50, 0.162, 0.778, 0.444),
    (6.85, 83.33, 90.28, 0.122, 0.827, 1.000),
    (9.76, 89.59, 89.04, 0.175, 0.945, 1.000),
    (13.88, 94.32, 95.32, 0.241, 0.981, 1.000),
    (4.70, 62.27, 97.24, 0.086, 0.918, 0.750),
    (11.03, 68.18, 92.33, 0.187, 0.912, 1.000),
    (97.22, 87.55, 99.98, 0.921, 0.965, 1.000),
];

fn criterion_6() -> Outcome {
    let m = metrics(&ConfusionCounts {
        tp: 8,
        fp: 2,
        tn: 88,
        fn_: 2,
    });
    ensure(
        (m.precision - 0.8).abs() < 1e-12
            && (m.recall - 0.8).abs() < 1e-12
            && (m.specificity - 0.9778).abs() < 5e-5
            && (m.f1 - 0.8).abs() < 1e-12,
        || format!("fixture gave {m:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..30 {
        let n = rng.random_range(2..=500);
        let mut truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        truth[0] = 0;
        truth[1] = 1;
        let scores: Vec<f64> = truth
            .iter()
            .map(|&t| ((rng.random_range(0.0..1.0) + 0.4 * t as f64) * 20.0).round() / 20.0)
            .collect();
        let a = roc_auc(&scores, &truth).map_err(|e| e.to_string())?;
        let b = pair_auc(&scores, &truth);
        ensure((a - b).abs() < 1e-12, || {
            format!("trial {trial}: AUC {a} vs pair count {b}")
        })?;
    }

    let rows: Vec<PatientRow> = PUBLISHED_ROWS
        .iter()
        .enumerate()
        .map(|(i, r)| PatientRow {
            patient_id: format!("Pt-{i:02}"),
            precision: r.0 / 100.0,
            recall: r.1 / 100.0,
            specificity: r.2 / 100.0,
            f1: r.3,
            fpr: 1.0 - r.2 / 100.0,
            auc: Some(r.4),
            detection_ratio: r.5,
            events: 1,
        })
        .collect();
    let mean = aggregate(&[rows]).map_err(|e| e.to_string())?.mean;
    // Printed values carry three decimals (F1) or two decimals in percent.
    let tol = 0.0005 + 1e-12;
    ensure((mean.f1 - 0.336).abs() <= tol, || {
        format!("mean F1 {}", mean.f1)
    })?;
    ensure((mean.precision - 0.2870).abs() <= tol, || {
        format!("mean precision {}", mean.precision)
    })?;
    ensure((mean.recall - 0.7966).abs() <= tol, || {
        format!("mean recall {}", mean.recall)
    })?;
    ensure((mean.specificity - 0.9505).abs() <= tol, || {
        format!("mean specificity {}", mean.specificity)
    })?;
    ensure((mean.auc.unwrap_or(0.0) - 0.942).abs() <= tol, || {
        format!("mean AUC {:?}", mean.auc)
    })?;
    ensure((mean.detection_ratio - 0.942).abs() <= tol, || {
        format!("mean detection {}", mean.detection_ratio)
    })?;
    Ok(format!(
        "fixture exact, AUC = pair count, published mean F1 {:.4} precision {:.4}",
        mean.f1, mean.precision
    ))
}

fn tone(freq: f64, fs: f64, secs: f64, amplitude: f64) -> Vec<f64> {
    let n = (fs * secs) as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
        .collect()
}

/// RMS over the middle half, away from edge transients.
fn mid_rms(x: &[f64]) -> f64 {
    let (a, b) = (x.len() / 4, 3 * x.len() / 4);
    (x[a..b].iter().map(|v| v * v).sum::<f64>() / (b - a) as f64).sqrt()
}

fn criterion_7() -> Outcome {
    let fs = 500.0;
    let filters = vec![
        FilterSpec::BandpassFir {
            low_hz: 1.0,
            high_hz: 60.0,
            num_taps: 1025,
        },
        FilterSpec::NotchIir {
            center_hz: 50.0,
            q_factor: 35.0,
        },
    ];
    let signals = vec![
        tone(30.0, fs, 20.0, 1.0),
        tone(50.0, fs, 20.0, 1.0),
        tone(63.0, fs, 20.0, 1.0),
        vec![1.0; 10_000],
    ];
    let rec = Recording::new(
        "P",
        "S",
        vec!["a".into(), "b".into(), "c".into(), "d".into()],
        fs,
        signals.clone(),
    )
    .map_err(|e| e.to_string())?;
    let out = apply_zero_phase(&rec, &filters).map_err(|e| e.to_string())?;
    let ratio = |i: usize| mid_rms(&out.samples[i]) / mid_rms(&signals[i]);
    let db = |r: f64| 20.0 * r.log10();
    let (pass, notch, stop, dc) = (db(ratio(0)), ratio(1), db(ratio(2)), db(ratio(3)));
    ensure(pass.abs() <= 1.0, || format!("30 Hz gain {pass:.3} dB"))?;
    ensure(notch <= 0.05, || {
        format!("50 Hz residual {:.2}%", 100.0 * notch)
    })?;
    ensure(stop <= -40.0, || format!("63 Hz gain {stop:.1} dB"))?;
    ensure(dc <= -20.0, || format!("DC gain {dc:.1} dB"))?;

    let rec = Recording::new(
        "P",
        "S",
        vec!["a".into()],
        512.0,
        vec![tone(5.0, 512.0, 20.0, 1.0)],
    )
    .map_err(|e| e.to_string())?;
    let down = resample(&rec, 500.0).map_err(|e| e.to_string())?;
    let amplitude = mid_rms(&down.samples[0]) * 2f64.sqrt();
    ensure((amplitude - 1.0).abs() <= 0.02, || {
        format!("resampled 5 Hz amplitude {amplitude:.4}")
    })?;
    Ok(format!(
        "30 Hz {pass:+.3} dB, 50 Hz residual {:.3}%, 63 Hz {stop:.1} dB, DC {dc:.1} dB, 5 Hz amplitude {amplitude:.4}",
        100.0 * notch
    ))
}

fn run_pipeline(
    dir: &std::path::Path,
    resolutions: &[f64],
    epochs: usize,
) -> Result<EvaluationOutput, String> {
    let ctx = synthetic_config(dir, 4, 600.0, 5.0, resolutions, epochs, 1);
    cmd_preprocess(&ctx).map_err(|e| e.to_string())?;
    let summary = cmd_train(&ctx).map_err(|e| e.to_string())?;
    ensure(summary.failed.is_empty(), || {
        format!("failed jobs {:?}", summary.failed)
    })?;
    cmd_evaluate(&ctx).map_err(|e| e.to_string())
}

fn criterion_8() -> Outcome {
    let epochs = 12;
    let multi_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let single_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let multi = run_pipeline(multi_dir.path(), &[5.0, 2.5], epochs)?;
    let single = run_pipeline(single_dir.path(), &[5.0], epochs)?;
    for row in &multi.plain.patients {
        let auc = row.auc.unwrap_or(0.0);
        ensure(auc >= 0.90, || format!("{}: AUC {auc:.3}", row.patient_id))?;
        ensure(row.detection_ratio == 1.0, || {
            format!(
                "{}: detection ratio {}",
                row.patient_id, row.detection_ratio
            )
        })?;
    }
    let (pm, ps) = (multi.plain.mean.precision, single.plain.mean.precision);
    ensure(pm >= ps, || {
        format!("precision D=[5,2.5] {pm:.4} < D=[5] {ps:.4}")
    })?;
    let min_auc = multi
        .plain
        .patients
        .iter()
        .filter_map(|r| r.auc)
        .fold(f64::INFINITY, f64::min);
    Ok(format!(
        "min AUC {min_auc:.3}, detection 1.0, precision D=[5,2.5] {:.2}% vs D=[5] {:.2}%",
        100.0 * pm,
        100.0 * ps
    ))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ctx = synthetic_config(dir.path(), 4, 600.0, 5.0, &[5.0], 1, 3);
    cmd_preprocess(&ctx).map_err(|e| e.to_string())?;
    let store = SegmentStore::read(&dir.path().join(TRAIN_STORE)).map_err(|e| e.to_string())?;
    let meta: Vec<RecordingMeta> = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join(RECORDINGS_FILE)).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let ids: Vec<String> = {
        let mut v: Vec<String> = meta.iter().map(|m| m.patient_id.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let splits = mrwave::training::make_loso_splits(&ids, 3).map_err(|e| e.to_string())?;
    for split in &splits {
        let part = mrwave::training::job_partition(split, &store.segments, &ctx.config.training)
            .map_err(|e| e.to_string())?;
        let leaked = part
            .train
            .iter()
            .chain(&part.val)
            .filter(|s| s.patient_id == split.test_patient_id)
            .count();
        ensure(leaked == 0, || {
            format!(
                "{}: {leaked} test-patient segments in train/val",
                split.job_name()
            )
        })?;
        ensure(!part.train.is_empty() && !part.val.is_empty(), || {
            format!("{}: empty partition", split.job_name())
        })?;
    }
    for m in &meta {
        let count = |label: u8| {
            store
                .segments
                .iter()
                .filter(|s| s.recording_id == m.recording_id && s.label == label)
                .count()
        };
        let (pos, neg) = (count(1), count(0));
        ensure(pos > 0 && neg == 2 * pos, || {
            format!("{}: {pos} seizure vs {neg} nonseizure", m.recording_id)
        })?;
    }

    let report = |sub: &str| -> Result<Vec<u8>, String> {
        let dir = dir.path().join(sub);
        let ctx = synthetic_config(&dir, 3, 240.0, 5.0, &[5.0, 2.5], 2, 1);
        cmd_preprocess(&ctx).map_err(|e| e.to_string())?;
        cmd_train(&ctx).map_err(|e| e.to_string())?;
        cmd_evaluate(&ctx).map_err(|e| e.to_string())?;
        std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())
    };
    let (a, b) = (report("first")?, report("second")?);
    ensure(a == b, || "reports differ between identical runs".into())?;
    Ok(format!(
        "{} jobs leak-free, 1:2 per recording over {} recordings, reports bit-identical",
        splits.len(),
        meta.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "architecture shape conformance",
            criterion_1,
            Duration::from_secs(1),
        ),
        (
            "feature length equals forward width",
            criterion_2,
            Duration::from_secs(10),
        ),
        (
            "gradient correctness",
            criterion_3,
            Duration::from_secs(120),
        ),
        (
            "ECOD oracle equivalence",
            criterion_4,
            Duration::from_secs(10),
        ),
        (
            "post-processing monotonicity",
            criterion_5,
            Duration::from_secs(5),
        ),
        ("metric kernels", criterion_6, Duration::from_secs(10)),
        ("DSP conformance", criterion_7, Duration::from_secs(30)),
        (
            "desk-scale learning",
            criterion_8,
            Duration::from_secs(15 * 60),
        ),
        ("protocol audit", criterion_9, Duration::from_secs(60)),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => {
                Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} ({:.2} s)", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail} ({:.2} s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
