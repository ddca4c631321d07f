use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of non-zero differences for which the exact null
/// distribution is enumerated.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)` over midranks of |a - b|.
    pub statistic: f64,
    pub p_value: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test of paired samples.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Undefined("all paired differences are zero".into()));
    }
    if n < 5 {
        return Err(Error::Undefined(format!(
            "{n} non-zero differences; at least 5 are required"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    // Doubled midranks stay integral.
    let mut rank2 = vec![0usize; n];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        for &i in &order[start..end] {
            rank2[i] = start + end + 1;
        }
        ties.push(end - start);
        start = end;
    }
    let w_plus2: usize = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| rank2[i]).sum();
    let total2 = n * (n + 1);
    let w_minus2 = total2 - w_plus2;
    let statistic = w_plus2.min(w_minus2) as f64 / 2.0;

    if n <= EXACT_LIMIT {
        // counts[s]: sign assignments whose doubled positive-rank sum is s.
        let mut counts = vec![0f64; total2 + 1];
        counts[0] = 1.0;
        for &r in &rank2 {
            for s in (r..=total2).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w_plus2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w_plus2..].iter().sum::<f64>() / all;
        Ok(WilcoxonResult {
            statistic,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            n,
            exact: true,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let z = (w_plus2 as f64 / 2.0 - mean) / var.sqrt();
        let normal = Normal::standard();
        let p = 2.0 * normal.cdf(z).min(normal.sf(z));
        Ok(WilcoxonResult {
            statistic,
            p_value: p.min(1.0),
            n,
            exact: false,
        })
    }
}
