//! ECOD outlier scores over segment feature vectors and the mean-threshold
//! suppression rule applied to classifier seizure calls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyResult {
    pub scores: Vec<f64>,
    pub mean: f64,
    /// `flags[i] == 1` iff `scores[i] > mean`.
    pub flags: Vec<u8>,
}

/// Biased sample skewness; zero for a constant column.
fn skewness(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let m2 = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 0.0;
    }
    let m3 = col.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Per-row outlier scores for an `M x p` matrix given as rows.
///
/// For each column the left tail probability is the fraction of values
/// `<= x` and the right tail the fraction `>= x`; a row's score is the largest
/// of its summed left, right and skewness-selected tail log-probabilities.
pub fn ecod_scores(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::Undefined(format!(
            "ECOD needs at least 2 rows, got {m}"
        )));
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::dim("ECOD rows have no columns"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::dim(format!(
            "row {i} has {} columns, expected {p}",
            rows[i].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "ECOD input contains non-finite values".into(),
        ));
    }

    let (mut left, mut right, mut auto) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut order: Vec<usize> = (0..m).collect();
    let mut col = vec![0.0; m];
    let mut o_left = vec![0.0; m];
    let mut o_right = vec![0.0; m];
    for j in 0..p {
        for (c, r) in col.iter_mut().zip(rows) {
            *c = r[j];
        }
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        // Walk groups of equal values: count <= x is the group end, count >= x
        // is m minus the group start.
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && col[order[end]] == col[order[start]] {
                end += 1;
            }
            let fl = end as f64 / m as f64;
            let fr = (m - start) as f64 / m as f64;
            for &i in &order[start..end] {
                o_left[i] = -fl.ln();
                o_right[i] = -fr.ln();
            }
            start = end;
        }
        let use_left = skewness(&col) < 0.0;
        for i in 0..m {
            left[i] += o_left[i];
            right[i] += o_right[i];
            auto[i] += if use_left { o_left[i] } else { o_right[i] };
        }
    }
    Ok((0..m).map(|i| left[i].max(right[i]).max(auto[i])).collect())
}

/// Flags scores strictly above their mean.
pub fn threshold_rule(scores: &[f64]) -> AnomalyResult {
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    AnomalyResult {
        scores: scores.to_vec(),
        mean,
        flags: scores.iter().map(|&a| u8::from(a > mean)).collect(),
    }
}

/// A seizure call survives only where the anomaly flag is also set.
pub fn fuse_labels(model_preds: &[u8], anomaly_flags: &[u8]) -> Result<Vec<u8>> {
    if model_preds.len() != anomaly_flags.len() {
        return Err(Error::dim(format!(
            "{} predictions but {} anomaly flags",
            model_preds.len(),
            anomaly_flags.len()
        )));
    }
    Ok(model_preds
        .iter()
        .zip(anomaly_flags)
        .map(|(&p, &f)| p & f)
        .collect())
}
