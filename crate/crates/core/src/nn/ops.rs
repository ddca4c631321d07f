//! Forward and backward kernels for the layer set of the network.
//!
//! Every backward function takes the cached forward input (or output) and the
//! upstream gradient and returns the input gradient; parameter gradients are
//! accumulated into caller-provided buffers.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Geometry of a grouped, unpadded 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub length: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn out_length(&self) -> usize {
        (self.length - self.kernel) / self.stride + 1
    }

    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn check(
        input: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        input.expect_rank(3, "conv1d input")?;
        weight.expect_rank(3, "conv1d weight")?;
        let (b, cin, l) = (input.dim(0), input.dim(1), input.dim(2));
        let (cout, cin_g, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
        if groups == 0 || stride == 0 || k == 0 {
            return Err(Error::dim(
                "conv1d: groups, stride and kernel must be positive",
            ));
        }
        if cin % groups != 0 {
            return Err(Error::dim(format!(
                "conv1d input channels axis: {cin} not divisible by {groups} groups"
            )));
        }
        if cout % groups != 0 {
            return Err(Error::dim(format!(
                "conv1d output channels axis: {cout} not divisible by {groups} groups"
            )));
        }
        if cin_g != cin / groups {
            return Err(Error::dim(format!(
                "conv1d weight axis 1: expected {} input channels per group, got {cin_g}",
                cin / groups
            )));
        }
        if bias.shape() != [cout] {
            return Err(Error::dim(format!(
                "conv1d bias: expected shape [{cout}], got {:?}",
                bias.shape()
            )));
        }
        if l < k {
            return Err(Error::dim(format!(
                "conv1d length axis: input length {l} shorter than kernel {k}"
            )));
        }
        Ok(ConvGeometry {
            batch: b,
            in_channels: cin,
            out_channels: cout,
            length: l,
            kernel: k,
            stride,
            groups,
        })
    }
}

/// Unfolds sample `b`, group `g` into a `(cin_g * k) x lout` matrix.
fn im2col(x: &[f64], geo: &ConvGeometry, b: usize, g: usize, col: &mut [f64]) {
    let (l, k, s, lout) = (geo.length, geo.kernel, geo.stride, geo.out_length());
    let cin_g = geo.in_per_group();
    for i in 0..cin_g {
        let row = &x[(b * geo.in_channels + g * cin_g + i) * l..][..l];
        for t in 0..k {
            let dst = &mut col[(i * k + t) * lout..][..lout];
            if s == 1 {
                dst.copy_from_slice(&row[t..t + lout]);
            } else {
                for (o, d) in dst.iter_mut().enumerate() {
                    *d = row[o * s + t];
                }
            }
        }
    }
}

fn col2im_add(dcol: &[f64], geo: &ConvGeometry, b: usize, g: usize, dx: &mut [f64]) {
    let (l, k, s, lout) = (geo.length, geo.kernel, geo.stride, geo.out_length());
    let cin_g = geo.in_per_group();
    for i in 0..cin_g {
        let row = &mut dx[(b * geo.in_channels + g * cin_g + i) * l..][..l];
        for t in 0..k {
            let src = &dcol[(i * k + t) * lout..][..lout];
            if s == 1 {
                row[t..t + lout]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, v)| *d += v);
            } else {
                for (o, v) in src.iter().enumerate() {
                    row[o * s + t] += v;
                }
            }
        }
    }
}

/// Grouped cross-correlation without padding:
/// `(B, Cin, L) * (Cout, Cin/groups, k) -> (B, Cout, floor((L-k)/stride)+1)`.
pub fn conv1d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    groups: usize,
) -> Result<Tensor> {
    let geo = ConvGeometry::check(input, weight, bias, stride, groups)?;
    let lout = geo.out_length();
    let (cin_g, cout_g, k) = (geo.in_per_group(), geo.out_per_group(), geo.kernel);
    let rows = cin_g * k;
    let mut y = Tensor::zeros(&[geo.batch, geo.out_channels, lout]);
    let mut col = vec![0.0; rows * lout];
    let (x, w, bias) = (input.data(), weight.data(), bias.data());
    let yd = y.data_mut();
    for b in 0..geo.batch {
        for g in 0..groups {
            im2col(x, &geo, b, g, &mut col);
            let out = &mut yd[(b * geo.out_channels + g * cout_g) * lout..][..cout_g * lout];
            for (o, chunk) in out.chunks_mut(lout).enumerate() {
                chunk.fill(bias[g * cout_g + o]);
            }
            let wg = &w[g * cout_g * rows..][..cout_g * rows];
            gemm(
                cout_g,
                rows,
                lout,
                wg,
                (rows, 1),
                &col,
                (lout, 1),
                1.0,
                out,
                (lout, 1),
            );
        }
    }
    Ok(y)
}

/// Returns `dx`; adds into `dweight` and `dbias`.
pub fn conv1d_backward(
    input: &Tensor,
    weight: &Tensor,
    dy: &Tensor,
    stride: usize,
    groups: usize,
    dweight: &mut Tensor,
    dbias: &mut Tensor,
) -> Result<Tensor> {
    let geo = ConvGeometry::check(input, weight, dbias, stride, groups)?;
    let lout = geo.out_length();
    if dy.shape() != [geo.batch, geo.out_channels, lout] {
        return Err(Error::dim(format!(
            "conv1d backward: upstream gradient {:?} does not match output [{}, {}, {lout}]",
            dy.shape(),
            geo.batch,
            geo.out_channels
        )));
    }
    let (cin_g, cout_g, k) = (geo.in_per_group(), geo.out_per_group(), geo.kernel);
    let rows = cin_g * k;
    let mut dx = Tensor::zeros(input.shape());
    let mut col = vec![0.0; rows * lout];
    let mut dcol = vec![0.0; rows * lout];
    let (x, w, dyd) = (input.data(), weight.data(), dy.data());
    let dxd = dx.data_mut();
    let dwd = dweight.data_mut();
    let dbd = dbias.data_mut();
    for b in 0..geo.batch {
        for g in 0..groups {
            let dyg = &dyd[(b * geo.out_channels + g * cout_g) * lout..][..cout_g * lout];
            for (o, chunk) in dyg.chunks(lout).enumerate() {
                dbd[g * cout_g + o] += chunk.iter().sum::<f64>();
            }
            im2col(x, &geo, b, g, &mut col);
            let dwg = &mut dwd[g * cout_g * rows..][..cout_g * rows];
            // dW += dY * col^T
            gemm(
                cout_g,
                lout,
                rows,
                dyg,
                (lout, 1),
                &col,
                (1, lout),
                1.0,
                dwg,
                (rows, 1),
            );
            // dcol = W^T * dY
            let wg = &w[g * cout_g * rows..][..cout_g * rows];
            gemm(
                rows,
                cout_g,
                lout,
                wg,
                (1, rows),
                dyg,
                (lout, 1),
                0.0,
                &mut dcol,
                (lout, 1),
            );
            col2im_add(&dcol, &geo, b, g, dxd);
        }
    }
    Ok(dx)
}

/// `y = x W^T + b` for `x: (B, Fin)`, `W: (Fout, Fin)`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    input.expect_rank(2, "linear input")?;
    weight.expect_rank(2, "linear weight")?;
    let (b, fin) = (input.dim(0), input.dim(1));
    let fout = weight.dim(0);
    if weight.dim(1) != fin {
        return Err(Error::dim(format!(
            "linear feature axis: input has {fin} features, weight expects {}",
            weight.dim(1)
        )));
    }
    if bias.shape() != [fout] {
        return Err(Error::dim(format!(
            "linear bias: expected shape [{fout}], got {:?}",
            bias.shape()
        )));
    }
    let mut y = Tensor::zeros(&[b, fout]);
    for row in y.data_mut().chunks_mut(fout) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        b,
        fin,
        fout,
        input.data(),
        (fin, 1),
        weight.data(),
        (1, fin),
        1.0,
        y.data_mut(),
        (fout, 1),
    );
    Ok(y)
}

pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    dy: &Tensor,
    dweight: &mut Tensor,
    dbias: &mut Tensor,
) -> Result<Tensor> {
    let (b, fin) = (input.dim(0), input.dim(1));
    let fout = weight.dim(0);
    if dy.shape() != [b, fout] {
        return Err(Error::dim(format!(
            "linear backward: upstream gradient {:?}, expected [{b}, {fout}]",
            dy.shape()
        )));
    }
    for row in dy.data().chunks(fout) {
        dbias
            .data_mut()
            .iter_mut()
            .zip(row)
            .for_each(|(d, v)| *d += v);
    }
    gemm(
        fout,
        b,
        fin,
        dy.data(),
        (1, fout),
        input.data(),
        (fin, 1),
        1.0,
        dweight.data_mut(),
        (fin, 1),
    );
    let mut dx = Tensor::zeros(&[b, fin]);
    gemm(
        b,
        fout,
        fin,
        dy.data(),
        (fout, 1),
        weight.data(),
        (fin, 1),
        0.0,
        dx.data_mut(),
        (fin, 1),
    );
    Ok(dx)
}

pub fn leaky_relu(input: &Tensor, slope: f64) -> Tensor {
    let data = input
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { slope * x })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn leaky_relu_backward(input: &Tensor, dy: &Tensor, slope: f64) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&x, &g)| if x >= 0.0 { g } else { slope * g })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&x| sigmoid_scalar(x)).collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Takes the forward *output*.
pub fn sigmoid_backward(output: &Tensor, dy: &Tensor) -> Tensor {
    let data = output
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    Tensor::from_vec(output.shape(), data).expect("same shape")
}

/// Mean over the last axis: `(B, C, L) -> (B, C)`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    input.expect_rank(3, "global_avg_pool input")?;
    let (b, c, l) = (input.dim(0), input.dim(1), input.dim(2));
    if l == 0 {
        return Err(Error::dim("global_avg_pool length axis is empty"));
    }
    let data = input
        .data()
        .chunks(l)
        .map(|row| row.iter().sum::<f64>() / l as f64)
        .collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn global_avg_pool_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    let l = input_shape[2];
    let mut dx = Tensor::zeros(input_shape);
    for (row, &g) in dx.data_mut().chunks_mut(l).zip(dy.data()) {
        row.fill(g / l as f64);
    }
    dx
}

/// Row-wise log-softmax of `(B, K)`, stabilized by max subtraction.
pub fn log_softmax(input: &Tensor) -> Result<Tensor> {
    input.expect_rank(2, "log_softmax input")?;
    let k = input.dim(1);
    if k < 2 {
        return Err(Error::dim(format!(
            "log_softmax needs at least 2 classes, got {k}"
        )));
    }
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::from_vec(input.shape(), out)
}

/// Takes the forward *output*.
pub fn log_softmax_backward(output: &Tensor, dy: &Tensor) -> Tensor {
    let k = output.dim(1);
    let mut dx = Vec::with_capacity(output.len());
    for (y, g) in output.data().chunks(k).zip(dy.data().chunks(k)) {
        let s: f64 = g.iter().sum();
        dx.extend(y.iter().zip(g).map(|(&yi, &gi)| gi - yi.exp() * s));
    }
    Tensor::from_vec(output.shape(), dx).expect("same shape")
}

/// Class-weighted negative log-likelihood with weighted-mean reduction.
/// Returns the loss and its gradient with respect to `log_probs`.
pub fn weighted_nll_loss(
    log_probs: &Tensor,
    targets: &[u8],
    class_weights: &[f64],
) -> Result<(f64, Tensor)> {
    log_probs.expect_rank(2, "nll log_probs")?;
    let (b, k) = (log_probs.dim(0), log_probs.dim(1));
    if targets.len() != b {
        return Err(Error::dim(format!(
            "nll: {} targets for batch of {b}",
            targets.len()
        )));
    }
    if class_weights.len() != k {
        return Err(Error::dim(format!(
            "nll: {} class weights for {k} classes",
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::config("class weights must be positive"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let t = t as usize;
        if t >= k {
            return Err(Error::dim(format!(
                "nll: target {t} at row {i} outside {k} classes"
            )));
        }
        let w = class_weights[t];
        num -= w * log_probs.data()[i * k + t];
        den += w;
    }
    let mut grad = Tensor::zeros(log_probs.shape());
    for (i, &t) in targets.iter().enumerate() {
        grad.data_mut()[i * k + t as usize] = -class_weights[t as usize] / den;
    }
    Ok((num / den, grad))
}

/// Batch-norm forward. `input` is `(B, C, L)` or `(B, C)`; statistics are per
/// channel over batch and length.
pub struct BatchNormForward {
    pub output: Tensor,
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn bn_dims(input: &Tensor) -> Result<(usize, usize, usize)> {
    match input.rank() {
        2 => Ok((input.dim(0), input.dim(1), 1)),
        3 => Ok((input.dim(0), input.dim(1), input.dim(2))),
        _ => Err(Error::dim(format!(
            "batchnorm1d expects (B, C) or (B, C, L), got {:?}",
            input.shape()
        ))),
    }
}

/// Normalizes with batch statistics (biased variance).
pub fn batchnorm_train(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<BatchNormForward> {
    let (b, c, l) = bn_dims(input)?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::dim(format!(
            "batchnorm channel axis: {c} channels, {} gammas",
            gamma.len()
        )));
    }
    let n = b * l;
    if n < 2 {
        return Err(Error::dim(format!(
            "batchnorm training needs at least 2 values per channel, got {n}"
        )));
    }
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            mean[ci] += x[(bi * c + ci) * l..][..l].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for bi in 0..b {
        for ci in 0..c {
            let m = mean[ci];
            var[ci] += x[(bi * c + ci) * l..][..l]
                .iter()
                .map(|v| (v - m) * (v - m))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut normalized = Tensor::zeros(input.shape());
    let mut output = Tensor::zeros(input.shape());
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * l;
            for j in 0..l {
                let xh = if var[ci] + eps > 0.0 {
                    (x[off + j] - mean[ci]) * inv_std[ci]
                } else {
                    0.0
                };
                normalized.data_mut()[off + j] = xh;
                output.data_mut()[off + j] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    Ok(BatchNormForward {
        output,
        normalized,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    })
}

/// Backward of [`batchnorm_train`]; adds into `dgamma` / `dbeta`.
pub fn batchnorm_train_backward(
    normalized: &Tensor,
    inv_std: &[f64],
    gamma: &[f64],
    dy: &Tensor,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Result<Tensor> {
    let (b, c, l) = bn_dims(normalized)?;
    let n = (b * l) as f64;
    let (xh, g) = (normalized.data(), dy.data());
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xh = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * l;
            for j in 0..l {
                sum_dy[ci] += g[off + j];
                sum_dy_xh[ci] += g[off + j] * xh[off + j];
            }
        }
    }
    for ci in 0..c {
        dgamma[ci] += sum_dy_xh[ci];
        dbeta[ci] += sum_dy[ci];
    }
    let mut dx = Tensor::zeros(normalized.shape());
    let dxd = dx.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * l;
            let k = gamma[ci] * inv_std[ci] / n;
            for j in 0..l {
                dxd[off + j] = k * (n * g[off + j] - sum_dy[ci] - xh[off + j] * sum_dy_xh[ci]);
            }
        }
    }
    Ok(dx)
}

/// Normalizes with fixed running statistics.
pub fn batchnorm_eval(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let (b, c, l) = bn_dims(input)?;
    if gamma.len() != c {
        return Err(Error::dim(format!(
            "batchnorm channel axis: {c} channels, {} gammas",
            gamma.len()
        )));
    }
    let mut out = Tensor::zeros(input.shape());
    let x = input.data();
    for bi in 0..b {
        for ci in 0..c {
            let scale = gamma[ci] / (running_var[ci] + eps).sqrt();
            let off = (bi * c + ci) * l;
            for j in 0..l {
                out.data_mut()[off + j] = (x[off + j] - running_mean[ci]) * scale + beta[ci];
            }
        }
    }
    Ok(out)
}
