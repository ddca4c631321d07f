use std::hash::Hasher;

use rand::Rng;

use super::config::{BLOCK_WIDTH, HIDDEN_WIDTH, MIN_DEEPEST_LEN, N_BLOCKS, N_SCALES};
use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm1d, Conv1d, GlobalAvgPool, LeakyRelu, Linear, Module, Param, Sigmoid, Tensor,
};

/// Six cascaded depthwise 2-tap, stride-2 convolutions with linear activation.
#[derive(Debug, Clone)]
pub struct MultiScale {
    pub convs: Vec<Conv1d>,
}

impl MultiScale {
    pub fn new<R: Rng + ?Sized>(name: &str, channels: usize, rng: &mut R) -> Self {
        let convs = (0..N_SCALES)
            .map(|k| {
                Conv1d::new(
                    &format!("{name}.scale{}", k + 1),
                    channels,
                    channels,
                    2,
                    2,
                    channels,
                    rng,
                )
            })
            .collect();
        MultiScale { convs }
    }

    /// Returns all six scale outputs, scale k having length `floor(L / 2^k)`.
    pub fn forward(&mut self, x: &Tensor) -> Result<Vec<Tensor>> {
        x.expect_rank(3, "multiscale input")?;
        let len = x.dim(2);
        if len >> N_SCALES < 1 {
            return Err(Error::dim(format!(
                "length axis: {len} samples cannot be halved {N_SCALES} times"
            )));
        }
        let mut outs: Vec<Tensor> = Vec::with_capacity(N_SCALES);
        for conv in &mut self.convs {
            let y = conv.forward(outs.last().unwrap_or(x))?;
            outs.push(y);
        }
        Ok(outs)
    }

    /// `grads[k]` is the external gradient on scale output k, if any.
    pub fn backward(&mut self, mut grads: Vec<Option<Tensor>>) -> Result<Tensor> {
        let mut carry: Option<Tensor> = None;
        for k in (0..N_SCALES).rev() {
            let mut g = match (grads[k].take(), carry.take()) {
                (Some(a), None) | (None, Some(a)) => a,
                (Some(mut a), Some(b)) => {
                    a.data_mut()
                        .iter_mut()
                        .zip(b.data())
                        .for_each(|(x, y)| *x += y);
                    a
                }
                (None, None) => {
                    return Err(Error::dim(format!("no gradient reaches scale {}", k + 1)))
                }
            };
            g = self.convs[k].backward(&g)?;
            carry = Some(g);
        }
        Ok(carry.expect("six scales"))
    }
}

impl Module for MultiScale {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.convs.iter().for_each(|c| c.visit_params(f));
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.convs.iter_mut().for_each(|c| c.visit_params_mut(f));
    }
}

/// Two [conv k=4, batch-norm, leaky-ReLU] stages and a global average pool.
#[derive(Debug, Clone)]
pub struct SpatioTemporal {
    pub conv1: Conv1d,
    pub bn1: BatchNorm1d,
    act1: LeakyRelu,
    pub conv2: Conv1d,
    pub bn2: BatchNorm1d,
    act2: LeakyRelu,
    pool: GlobalAvgPool,
}

impl SpatioTemporal {
    pub fn new<R: Rng + ?Sized>(name: &str, channels: usize, slope: f64, rng: &mut R) -> Self {
        SpatioTemporal {
            conv1: Conv1d::new(
                &format!("{name}.conv1"),
                channels,
                BLOCK_WIDTH,
                4,
                1,
                1,
                rng,
            ),
            bn1: BatchNorm1d::new(&format!("{name}.bn1"), BLOCK_WIDTH),
            act1: LeakyRelu::new(slope),
            conv2: Conv1d::new(
                &format!("{name}.conv2"),
                BLOCK_WIDTH,
                BLOCK_WIDTH,
                4,
                1,
                1,
                rng,
            ),
            bn2: BatchNorm1d::new(&format!("{name}.bn2"), BLOCK_WIDTH),
            act2: LeakyRelu::new(slope),
            pool: GlobalAvgPool::default(),
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        x.expect_rank(3, "spatio-temporal input")?;
        if x.dim(2) < MIN_DEEPEST_LEN {
            return Err(Error::dim(format!(
                "length axis: spatio-temporal block needs at least {MIN_DEEPEST_LEN} samples, got {}",
                x.dim(2)
            )));
        }
        let h = self.conv1.forward(x)?;
        let h = self.bn1.forward(&h, train)?;
        let h = self.act1.forward(&h);
        let h = self.conv2.forward(&h)?;
        let h = self.bn2.forward(&h, train)?;
        let h = self.act2.forward(&h);
        self.pool.forward(&h)
    }

    fn hash_activations(&self, h: &mut dyn Hasher) {
        hash_signs(&self.act1, h);
        hash_signs(&self.act2, h);
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let g = self.pool.backward(dy)?;
        let g = self.act2.backward(&g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.act1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        self.conv1.backward(&g)
    }
}

impl Module for SpatioTemporal {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.conv1.visit_params(f);
        self.bn1.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv1.visit_params_mut(f);
        self.bn1.visit_params_mut(f);
        self.conv2.visit_params_mut(f);
        self.bn2.visit_params_mut(f);
    }
}

/// Feature extractor owned by one resolution: multi-scale convolution, five
/// spatio-temporal blocks and the 160 -> 64 -> F head.
#[derive(Debug, Clone)]
pub struct Branch {
    pub multiscale: MultiScale,
    pub blocks: Vec<SpatioTemporal>,
    pub fc1: Linear,
    act: LeakyRelu,
    pub fc2: Linear,
    sig: Sigmoid,
}

impl Branch {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        channels: usize,
        feature_width: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let multiscale = MultiScale::new(name, channels, rng);
        let blocks = (0..N_BLOCKS)
            .map(|j| SpatioTemporal::new(&format!("{name}.block{}", j + 2), channels, slope, rng))
            .collect();
        Branch {
            multiscale,
            blocks,
            fc1: Linear::new(
                &format!("{name}.fc1"),
                N_BLOCKS * BLOCK_WIDTH,
                HIDDEN_WIDTH,
                rng,
            ),
            act: LeakyRelu::new(slope),
            fc2: Linear::new(&format!("{name}.fc2"), HIDDEN_WIDTH, feature_width, rng),
            sig: Sigmoid::default(),
        }
    }

    /// `(B, C, d * fs)` -> `(B, F)` with values in (0, 1).
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let scales = self.multiscale.forward(x)?;
        let batch = x.dim(0);
        let mut concat = Tensor::zeros(&[batch, N_BLOCKS * BLOCK_WIDTH]);
        for (j, block) in self.blocks.iter_mut().enumerate() {
            let f = block.forward(&scales[j + 1], train)?;
            for b in 0..batch {
                let dst = b * N_BLOCKS * BLOCK_WIDTH + j * BLOCK_WIDTH;
                concat.data_mut()[dst..dst + BLOCK_WIDTH]
                    .copy_from_slice(&f.data()[b * BLOCK_WIDTH..(b + 1) * BLOCK_WIDTH]);
            }
        }
        let h = self.fc1.forward(&concat)?;
        let h = self.act.forward(&h);
        let h = self.fc2.forward(&h)?;
        Ok(self.sig.forward(&h))
    }

    /// Folds the sign pattern of every leaky-ReLU input into `h`.
    pub fn hash_activations(&self, h: &mut dyn Hasher) {
        self.blocks.iter().for_each(|b| b.hash_activations(h));
        hash_signs(&self.act, h);
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let g = self.sig.backward(dy)?;
        let g = self.fc2.backward(&g)?;
        let g = self.act.backward(&g)?;
        let g = self.fc1.backward(&g)?;
        let batch = g.dim(0);
        let mut scale_grads: Vec<Option<Tensor>> = vec![None; super::config::N_SCALES];
        for (j, block) in self.blocks.iter_mut().enumerate() {
            let mut part = Tensor::zeros(&[batch, BLOCK_WIDTH]);
            for b in 0..batch {
                let src = b * N_BLOCKS * BLOCK_WIDTH + j * BLOCK_WIDTH;
                part.data_mut()[b * BLOCK_WIDTH..(b + 1) * BLOCK_WIDTH]
                    .copy_from_slice(&g.data()[src..src + BLOCK_WIDTH]);
            }
            scale_grads[j + 1] = Some(block.backward(&part)?);
        }
        self.multiscale.backward(scale_grads)
    }
}

impl Module for Branch {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.multiscale.visit_params(f);
        self.blocks.iter().for_each(|b| b.visit_params(f));
        self.fc1.visit_params(f);
        self.fc2.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.multiscale.visit_params_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_params_mut(f));
        self.fc1.visit_params_mut(f);
        self.fc2.visit_params_mut(f);
    }
}

pub(crate) fn hash_signs(act: &LeakyRelu, h: &mut dyn Hasher) {
    let Some(x) = act.cached_input() else {
        return;
    };
    for chunk in x.data().chunks(64) {
        let word = chunk
            .iter()
            .enumerate()
            .fold(0u64, |w, (i, &v)| w | (u64::from(v >= 0.0) << i));
        h.write_u64(word);
    }
}
