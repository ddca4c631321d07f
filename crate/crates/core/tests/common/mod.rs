//! Helpers and independent reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use mrwave::cli::{Context, RunConfig};
use mrwave::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

/// Direct-loop grouped strided 1-D convolution, no padding.
pub fn naive_conv1d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, groups: usize) -> Tensor {
    let (batch, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, cin_g, k) = (w.dim(0), w.dim(1), w.dim(2));
    let cout_g = cout / groups;
    let lout = (len - k) / stride + 1;
    let mut y = Tensor::zeros(&[batch, cout, lout]);
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    for n in 0..batch {
        for o in 0..cout {
            let g = o / cout_g;
            for t in 0..lout {
                let mut acc = bd[o];
                for ci in 0..cin_g {
                    let c = g * cin_g + ci;
                    for j in 0..k {
                        acc +=
                            wd[(o * cin_g + ci) * k + j] * xd[(n * cin + c) * len + t * stride + j];
                    }
                }
                y.data_mut()[(n * cout + o) * lout + t] = acc;
            }
        }
    }
    y
}

/// `y = x W^T + b` by loops, with `W` shaped `(out, in)`.
pub fn naive_linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (batch, fin, fout) = (x.dim(0), x.dim(1), w.dim(0));
    let mut y = Tensor::zeros(&[batch, fout]);
    for n in 0..batch {
        for o in 0..fout {
            let mut acc = b.data()[o];
            for i in 0..fin {
                acc += x.data()[n * fin + i] * w.data()[o * fin + i];
            }
            y.data_mut()[n * fout + o] = acc;
        }
    }
    y
}

/// ECOD scores by counting, one quadratic pass per column.
pub fn brute_ecod(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.len();
    let p = rows[0].len();
    let mf = m as f64;
    let mut left = vec![0.0; m];
    let mut right = vec![0.0; m];
    let mut auto = vec![0.0; m];
    for j in 0..p {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / mf;
        let m2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mf;
        let m3 = col.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / mf;
        let skew = if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) };
        for i in 0..m {
            let le = col.iter().filter(|&&v| v <= col[i]).count() as f64 / mf;
            let ge = col.iter().filter(|&&v| v >= col[i]).count() as f64 / mf;
            left[i] -= le.ln();
            right[i] -= ge.ln();
            auto[i] -= if skew < 0.0 { le.ln() } else { ge.ln() };
        }
    }
    (0..m).map(|i| left[i].max(right[i]).max(auto[i])).collect()
}

/// Probability that a random positive outscores a random negative, ties half.
pub fn pair_auc(scores: &[f64], truth: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in (0..scores.len()).filter(|&i| truth[i] == 1) {
        for j in (0..scores.len()).filter(|&j| truth[j] == 0) {
            pairs += 1.0;
            wins += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

/// Two-sided exact signed-rank p-value by enumerating every sign pattern.
pub fn enumerate_wilcoxon(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|v| {
            let below = d.iter().filter(|w| w.abs() < v.abs()).count() as f64;
            let equal = d.iter().filter(|w| w.abs() == v.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    for mask in 0..(1usize << n) {
        let s: f64 = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if s <= w_plus + 1e-9 {
            lo += 1;
        }
        if s >= w_plus - 1e-9 {
            hi += 1;
        }
    }
    let all = (1usize << n) as f64;
    let p = (2.0 * (lo.min(hi) as f64) / all).min(1.0);
    (w_plus.min(total - w_plus), p)
}

/// A separable synthetic corpus run through the whole CLI pipeline.
pub fn synthetic_config(
    dir: &std::path::Path,
    patients: usize,
    duration_sec: f64,
    window_sec: f64,
    resolutions: &[f64],
    max_epochs: usize,
    runs: usize,
) -> Context {
    let text = format!(
        r#"
seed = 7

[dataset.synthetic]
n_patients = {patients}
duration_sec = {duration_sec}
seizure_count = 2
seizure_len_sec = [30.0, 45.0]
noise_amplitude = 1.0
burst_frequency = 5.0
seed = 11
sample_rate = 200.0
n_channels = 4

[preprocess]
filters = [{{ kind = "bandpass_fir", low_hz = 1.0, high_hz = 60.0, num_taps = 201 }}]

[model]
window_sec = {window_sec}
resolutions = {resolutions:?}

[training]
max_epochs = {max_epochs}
patience = 5
runs_per_patient = {runs}
interictal_margin_sec = 30.0

[output]
dir = "{}"
export_scores = true
export_features = true
"#,
        dir.display()
    );
    let config = RunConfig::from_toml(&text).unwrap();
    Context::new(config, None, None, 1).unwrap()
}
