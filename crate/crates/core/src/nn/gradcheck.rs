//! Central finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Module;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates probed per parameter; `None` probes all of them.
    pub probes_per_param: Option<usize>,
    /// Probe the largest-magnitude analytic gradients first instead of a
    /// random sample. Coordinates whose gradient is near the finite-difference
    /// noise floor (roughly loss roundoff / h) say little about correctness.
    pub largest_first: bool,
    /// Coordinates tried per parameter before giving up on kink-free probes.
    pub max_attempts: usize,
    /// Parameter names left out of the comparison.
    pub skip: Vec<String>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            probes_per_param: None,
            largest_first: false,
            max_attempts: usize::MAX,
            skip: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub probes: usize,
    /// Probes discarded because the perturbation crossed a non-differentiable point.
    pub kinked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_err: f64,
    /// Parameters whose analytic gradient or loss was non-finite.
    pub failures: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self, rel_tol: f64) -> bool {
        self.failures.is_empty() && self.max_rel_err < rel_tol
    }

    pub fn worst(&self) -> Option<&GroupError> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// `loss` must evaluate the scalar loss for the model's current parameters
/// and, when its flag is true, also accumulate gradients into them (after
/// zeroing). Finite-difference evaluations pass `false`.
pub fn grad_check<M, F>(model: &mut M, loss: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    M: Module + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    grad_check_piecewise(model, loss, |_| 0, opts)
}

/// Like [`grad_check`] for piecewise-smooth losses. `piece` identifies the
/// linear region of the last evaluation (for example a hash of activation
/// signs); a probe whose `+h` or `-h` evaluation lands on a different piece
/// than the base point is discarded and another coordinate is drawn.
pub fn grad_check_piecewise<M, F, S>(
    model: &mut M,
    mut loss: F,
    piece: S,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    M: Module + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
    S: Fn(&M) -> u64,
{
    model.zero_grad();
    let base = loss(model, true)?;
    // Backward passes may consume forward caches, so the piece is read from a
    // separate forward-only evaluation.
    loss(model, false)?;
    let base_piece = piece(model);
    let mut report = GradCheckReport::default();
    if !base.is_finite() {
        report.failures.push(format!("loss is non-finite ({base})"));
        return Ok(report);
    }

    let mut groups: Vec<(usize, String, Vec<f64>)> = Vec::new();
    let mut index = 0;
    model.visit_params(&mut |p| {
        if p.trainable && !opts.skip.contains(&p.name) {
            groups.push((index, p.name.clone(), p.grad.data().to_vec()));
        }
        index += 1;
    });

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (param_idx, name, analytic) in groups {
        if let Some(bad) = analytic.iter().position(|g| !g.is_finite()) {
            report
                .failures
                .push(format!("{name}: non-finite gradient at element {bad}"));
            continue;
        }
        let mut order: Vec<usize> = (0..analytic.len()).collect();
        let wanted = match opts.probes_per_param {
            Some(n) => {
                order.shuffle(&mut rng);
                if opts.largest_first {
                    order.sort_by(|&a, &b| analytic[b].abs().total_cmp(&analytic[a].abs()));
                }
                n.min(analytic.len())
            }
            None => analytic.len(),
        };
        let (mut probes, mut kinked, mut worst) = (0, 0, 0.0f64);
        for &i in order.iter().take(opts.max_attempts) {
            if probes == wanted {
                break;
            }
            let (plus, p_piece) =
                perturbed_loss(model, &mut loss, &piece, param_idx, i, opts.step)?;
            let (minus, m_piece) =
                perturbed_loss(model, &mut loss, &piece, param_idx, i, -opts.step)?;
            if p_piece != base_piece || m_piece != base_piece {
                kinked += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            if !numeric.is_finite() {
                report.failures.push(format!(
                    "{name}: non-finite numeric gradient at element {i}"
                ));
                continue;
            }
            probes += 1;
            worst = worst.max(relative_error(analytic[i], numeric));
        }
        if probes == 0 && !analytic.is_empty() {
            report
                .failures
                .push(format!("{name}: every probe crossed a kink"));
        }
        report.max_rel_err = report.max_rel_err.max(worst);
        report.groups.push(GroupError {
            name,
            probes,
            kinked,
            max_rel_err: worst,
        });
    }
    Ok(report)
}

fn perturbed_loss<M, F, S>(
    model: &mut M,
    loss: &mut F,
    piece: &S,
    param_idx: usize,
    elem: usize,
    delta: f64,
) -> Result<(f64, u64)>
where
    M: Module + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
    S: Fn(&M) -> u64,
{
    let mut original = 0.0;
    nudge(model, param_idx, elem, |v| {
        original = *v;
        *v += delta;
    });
    let out = loss(model, false).map(|l| (l, piece(model)));
    nudge(model, param_idx, elem, |v| *v = original);
    out
}

fn nudge<M: Module + ?Sized>(
    model: &mut M,
    param_idx: usize,
    elem: usize,
    mut f: impl FnMut(&mut f64),
) {
    let mut index = 0;
    model.visit_params_mut(&mut |p| {
        if index == param_idx {
            f(&mut p.value.data_mut()[elem]);
        }
        index += 1;
    });
}
