//! The multi-resolution detector: per-resolution feature branches feeding a
//! shared predictor.

mod branch;
mod config;

use std::collections::hash_map::DefaultHasher;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use branch::{Branch, MultiScale, SpatioTemporal};
pub use config::{
    feature_length, ModelConfig, BLOCK_WIDTH, HIDDEN_WIDTH, MIN_DEEPEST_LEN, N_BLOCKS, N_SCALES,
};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64, read_u32, write_f64, write_u32};
use crate::nn::{
    load_params, save_params, LeakyRelu, Linear, LogSoftmax, Module, Param, Sigmoid, Tensor,
};

pub const MODEL_MAGIC: &[u8; 8] = b"MRWMODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct MrEegWaveNet {
    config: ModelConfig,
    pub branches: Vec<Branch>,
    pub fc1: Linear,
    act: LeakyRelu,
    pub fc2: Linear,
    sig: Sigmoid,
    pub fc3: Linear,
    log_softmax: LogSoftmax,
    batch: usize,
}

impl MrEegWaveNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slope = config.leaky_slope;
        let branches = (0..config.resolutions.len())
            .map(|r| {
                Branch::new(
                    &format!("branch{r}"),
                    config.channels,
                    config.feature_width,
                    slope,
                    &mut rng,
                )
            })
            .collect();
        let k = feature_length(&config);
        Ok(MrEegWaveNet {
            branches,
            fc1: Linear::new("predictor.fc1", k, HIDDEN_WIDTH, &mut rng),
            act: LeakyRelu::new(slope),
            fc2: Linear::new("predictor.fc2", HIDDEN_WIDTH, BLOCK_WIDTH, &mut rng),
            sig: Sigmoid::default(),
            fc3: Linear::new("predictor.fc3", BLOCK_WIDTH, 2, &mut rng),
            log_softmax: LogSoftmax::default(),
            batch: 0,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_length(&self) -> usize {
        feature_length(&self.config)
    }

    /// `(B, C, W * fs)` -> `(log_probs (B, 2), features (B, K))`.
    ///
    /// Each resolution `d` cuts the window into `floor(W / d)` contiguous
    /// sub-segments from the start; they are stacked into one batch for that
    /// resolution's branch. Features are laid out by descending `d`, then by
    /// ascending sub-segment start.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<(Tensor, Tensor)> {
        x.expect_rank(3, "model input")?;
        let (batch, channels, len) = (x.dim(0), x.dim(1), x.dim(2));
        if channels != self.config.channels {
            return Err(Error::dim(format!(
                "channel axis: model expects {} channels, input has {channels}",
                self.config.channels
            )));
        }
        if len != self.config.window_len() {
            return Err(Error::dim(format!(
                "length axis: model expects {} samples per window, input has {len}",
                self.config.window_len()
            )));
        }
        let k = self.feature_length();
        let f = self.config.feature_width;
        let mut features = Tensor::zeros(&[batch, k]);
        let mut offset = 0;
        for (r, branch) in self.branches.iter_mut().enumerate() {
            let d = self.config.resolutions[r];
            let (n_sub, sub_len) = (self.config.sub_count(d), self.config.sub_len(d));
            let stacked = split_subsegments(x, n_sub, sub_len);
            let out = branch.forward(&stacked, train)?;
            let width = n_sub * f;
            for b in 0..batch {
                features.data_mut()[b * k + offset..b * k + offset + width]
                    .copy_from_slice(&out.data()[b * width..(b + 1) * width]);
            }
            offset += width;
        }
        let h = self.fc1.forward(&features)?;
        let h = self.act.forward(&h);
        let h = self.fc2.forward(&h)?;
        let h = self.sig.forward(&h);
        let h = self.fc3.forward(&h)?;
        let log_probs = self.log_softmax.forward(&h)?;
        self.batch = batch;
        Ok((log_probs, features))
    }

    /// Accumulates parameter gradients for `d log_probs` from the last forward.
    pub fn backward(&mut self, d_log_probs: &Tensor) -> Result<()> {
        let g = self.log_softmax.backward(d_log_probs)?;
        let g = self.fc3.backward(&g)?;
        let g = self.sig.backward(&g)?;
        let g = self.fc2.backward(&g)?;
        let g = self.act.backward(&g)?;
        let g = self.fc1.backward(&g)?;
        let (batch, k) = (self.batch, g.dim(1));
        let f = self.config.feature_width;
        let mut offset = 0;
        for (r, branch) in self.branches.iter_mut().enumerate() {
            let width = self.config.sub_count(self.config.resolutions[r]) * f;
            let mut part = Vec::with_capacity(batch * width);
            for b in 0..batch {
                part.extend_from_slice(&g.data()[b * k + offset..b * k + offset + width]);
            }
            let part = Tensor::from_vec(&[batch * width / f, f], part)?;
            branch.backward(&part)?;
            offset += width;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let c = &self.config;
        w.write_all(MODEL_MAGIC)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        write_u32(w, MODEL_VERSION)?;
        write_f64(w, c.window_sec)?;
        write_u32(w, c.resolutions.len() as u32)?;
        for &d in &c.resolutions {
            write_f64(w, d)?;
        }
        write_u32(w, c.feature_width as u32)?;
        write_u32(w, c.channels as u32)?;
        write_f64(w, c.sample_rate)?;
        write_f64(w, c.leaky_slope)?;
        save_params(self, w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Checkpoint(format!("missing magic: {e}")))?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Checkpoint(
                "bad magic, not a model checkpoint".into(),
            ));
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported model version {version}"
            )));
        }
        let window_sec = read_f64(r)?;
        let n_res = read_u32(r)? as usize;
        if n_res > 64 {
            return Err(Error::Checkpoint(format!(
                "implausible resolution count {n_res}"
            )));
        }
        let resolutions = (0..n_res)
            .map(|_| read_f64(r))
            .collect::<Result<Vec<_>>>()?;
        let config = ModelConfig {
            window_sec,
            resolutions,
            feature_width: read_u32(r)? as usize,
            channels: read_u32(r)? as usize,
            sample_rate: read_f64(r)?,
            leaky_slope: read_f64(r)?,
        };
        let mut model = MrEegWaveNet::new(config, 0)?;
        load_params(&mut model, r)?;
        Ok(model)
    }

    /// Hash of which side of zero every leaky-ReLU input fell on in the last
    /// forward pass. Equal hashes mean the loss was evaluated on the same
    /// linear piece.
    pub fn activation_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.branches
            .iter()
            .for_each(|b| b.hash_activations(&mut h));
        branch::hash_signs(&self.act, &mut h);
        h.finish()
    }

    /// Biases whose gradient is identically zero because a batch-norm
    /// downstream removes any constant shift they introduce.
    pub fn bn_shadowed_params(&self) -> Vec<String> {
        let mut names = Vec::new();
        for branch in &self.branches {
            names.extend(branch.multiscale.convs.iter().map(|c| c.bias.name.clone()));
            for block in &branch.blocks {
                names.push(block.conv1.bias.name.clone());
                names.push(block.conv2.bias.name.clone());
            }
        }
        names
    }

    /// Copies every parameter value (including running statistics).
    pub fn snapshot(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(p.value.clone()));
        out
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        let mut i = 0;
        self.visit_params_mut(&mut |p| {
            p.value = snapshot[i].clone();
            i += 1;
        });
    }
}

/// `(B, C, L)` -> `(B * n, C, len)`, row `b * n + s` holding sub-segment `s` of item `b`.
fn split_subsegments(x: &Tensor, n: usize, len: usize) -> Tensor {
    let (batch, channels, total) = (x.dim(0), x.dim(1), x.dim(2));
    if n == 1 && len == total {
        return x.clone();
    }
    let mut out = Vec::with_capacity(batch * n * channels * len);
    for b in 0..batch {
        for s in 0..n {
            for c in 0..channels {
                let start = (b * channels + c) * total + s * len;
                out.extend_from_slice(&x.data()[start..start + len]);
            }
        }
    }
    Tensor::from_vec(&[batch * n, channels, len], out).expect("sizes agree")
}

impl Module for MrEegWaveNet {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.branches.iter().for_each(|b| b.visit_params(f));
        self.fc1.visit_params(f);
        self.fc2.visit_params(f);
        self.fc3.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.branches.iter_mut().for_each(|b| b.visit_params_mut(f));
        self.fc1.visit_params_mut(f);
        self.fc2.visit_params_mut(f);
        self.fc3.visit_params_mut(f);
    }
}
