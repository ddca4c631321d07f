//! Stateful layers: parameters plus the forward cache their backward pass needs.

use rand::Rng;

use super::ops;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named parameter tensor with its accumulated gradient. Non-trainable
/// entries (batch-norm running statistics) are saved in checkpoints but
/// skipped by optimizers and gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, value: Tensor) -> Self {
        Param {
            trainable: false,
            ..Param::new(name, value)
        }
    }
}

/// Anything that owns parameters, visited in a fixed order.
pub trait Module {
    fn visit_params(&self, f: &mut dyn FnMut(&Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.grad.fill(0.0));
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| {
            if p.trainable {
                n += p.value.len()
            }
        });
        n
    }
}

fn prefixed(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub groups: usize,
    input: Option<Tensor>,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
        rng: &mut R,
    ) -> Self {
        let cin_g = in_channels / groups;
        let fan_in = cin_g * kernel;
        Conv1d {
            weight: Param::new(
                prefixed(name, "weight"),
                uniform_init(rng, &[out_channels, cin_g, kernel], fan_in),
            ),
            bias: Param::new(
                prefixed(name, "bias"),
                uniform_init(rng, &[out_channels], fan_in),
            ),
            stride,
            groups,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = ops::conv1d(
            x,
            &self.weight.value,
            &self.bias.value,
            self.stride,
            self.groups,
        )?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::dim("conv1d backward before forward"))?;
        ops::conv1d_backward(
            &x,
            &self.weight.value,
            dy,
            self.stride,
            self.groups,
            &mut self.weight.grad,
            &mut self.bias.grad,
        )
    }
}

impl Module for Conv1d {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Self {
        Linear {
            weight: Param::new(
                prefixed(name, "weight"),
                uniform_init(rng, &[out_features, in_features], in_features),
            ),
            bias: Param::new(
                prefixed(name, "bias"),
                uniform_init(rng, &[out_features], in_features),
            ),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = ops::linear(x, &self.weight.value, &self.bias.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::dim("linear backward before forward"))?;
        ops::linear_backward(
            &x,
            &self.weight.value,
            dy,
            &mut self.weight.grad,
            &mut self.bias.grad,
        )
    }
}

impl Module for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over `(B, C, L)` or `(B, C)`. Before any training
/// step the running statistics are the (0, 1) defaults.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
enum BnCache {
    Train {
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Eval {
        scale: Vec<f64>,
        shape: Vec<usize>,
    },
}

impl BatchNorm1d {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm1d {
            gamma: Param::new(prefixed(name, "gamma"), Tensor::filled(&[channels], 1.0)),
            beta: Param::new(prefixed(name, "beta"), Tensor::zeros(&[channels])),
            running_mean: Param::buffer(prefixed(name, "running_mean"), Tensor::zeros(&[channels])),
            running_var: Param::buffer(
                prefixed(name, "running_var"),
                Tensor::filled(&[channels], 1.0),
            ),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        if train {
            let fwd =
                ops::batchnorm_train(x, self.gamma.value.data(), self.beta.value.data(), self.eps)?;
            let n = if x.rank() == 3 {
                x.dim(0) * x.dim(2)
            } else {
                x.dim(0)
            } as f64;
            let m = self.momentum;
            for (r, &b) in self
                .running_mean
                .value
                .data_mut()
                .iter_mut()
                .zip(&fwd.batch_mean)
            {
                *r = (1.0 - m) * *r + m * b;
            }
            // Running variance tracks the unbiased estimate.
            for (r, &b) in self
                .running_var
                .value
                .data_mut()
                .iter_mut()
                .zip(&fwd.batch_var)
            {
                *r = (1.0 - m) * *r + m * b * n / (n - 1.0);
            }
            self.cache = Some(BnCache::Train {
                normalized: fwd.normalized,
                inv_std: fwd.inv_std,
            });
            Ok(fwd.output)
        } else {
            let y = ops::batchnorm_eval(
                x,
                self.gamma.value.data(),
                self.beta.value.data(),
                self.running_mean.value.data(),
                self.running_var.value.data(),
                self.eps,
            )?;
            let scale = self
                .gamma
                .value
                .data()
                .iter()
                .zip(self.running_var.value.data())
                .map(|(g, v)| g / (v + self.eps).sqrt())
                .collect();
            self.cache = Some(BnCache::Eval {
                scale,
                shape: x.shape().to_vec(),
            });
            Ok(y)
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        match self.cache.take() {
            Some(BnCache::Train {
                normalized,
                inv_std,
            }) => ops::batchnorm_train_backward(
                &normalized,
                &inv_std,
                self.gamma.value.data(),
                dy,
                self.gamma.grad.data_mut(),
                self.beta.grad.data_mut(),
            ),
            Some(BnCache::Eval { scale, shape }) => {
                // Gamma/beta gradients are not needed outside training.
                let c = shape[1];
                let l = if shape.len() == 3 { shape[2] } else { 1 };
                let mut dx = dy.clone();
                for (i, v) in dx.data_mut().iter_mut().enumerate() {
                    *v *= scale[(i / l) % c];
                }
                Ok(dx)
            }
            None => Err(Error::dim("batchnorm backward before forward")),
        }
    }
}

impl Module for BatchNorm1d {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    input: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope, input: None }
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = ops::leaky_relu(x, self.slope);
        self.input = Some(x.clone());
        y
    }

    /// Input of the last forward pass, if its backward has not consumed it.
    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::dim("leaky_relu backward before forward"))?;
        Ok(ops::leaky_relu_backward(&x, dy, self.slope))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    output: Option<Tensor>,
}

impl Sigmoid {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = ops::sigmoid(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let y = self
            .output
            .take()
            .ok_or_else(|| Error::dim("sigmoid backward before forward"))?;
        Ok(ops::sigmoid_backward(&y, dy))
    }
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = ops::global_avg_pool(x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .take()
            .ok_or_else(|| Error::dim("pool backward before forward"))?;
        Ok(ops::global_avg_pool_backward(&shape, dy))
    }
}

#[derive(Debug, Clone, Default)]
pub struct LogSoftmax {
    output: Option<Tensor>,
}

impl LogSoftmax {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = ops::log_softmax(x)?;
        self.output = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let y = self
            .output
            .take()
            .ok_or_else(|| Error::dim("log_softmax backward before forward"))?;
        Ok(ops::log_softmax_backward(&y, dy))
    }
}
