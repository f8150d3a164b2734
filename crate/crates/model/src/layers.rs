//! Parameterized layers wrapping the raw tensor ops: convolution with its
//! kernel, batch norm with its affine pair and running stats, and the fully
//! connected layer. Each layer can enumerate its tensors for the optimizer
//! and for checkpoints.

use crate::error::Result;
use crate::init::Initializer;
use ynet_tensor::{BnMode, BnStats, Conv2dCfg, Scalar, Tensor};

/// Train/eval switch threaded through every forward pass (batch norm is the
/// only consumer).
pub type Mode = BnMode;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub struct Conv2d<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub cfg: Conv2dCfg,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        init: &mut Initializer,
        c_in: usize,
        c_out: usize,
        k: usize,
        cfg: Conv2dCfg,
        with_bias: bool,
    ) -> Result<Self> {
        let cig = c_in / cfg.groups;
        let fan_in = cig * k * k;
        let weight = Tensor::param(
            &[c_out, cig, k, k],
            init.uniform_fan_in(c_out * cig * k * k, fan_in),
        )?;
        let bias = if with_bias {
            Some(Tensor::param(&[c_out], init.uniform_fan_in(c_out, fan_in))?)
        } else {
            None
        };
        Ok(Conv2d { weight, bias, cfg })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv2d(&self.weight, self.bias.as_ref(), self.cfg)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b.clone()));
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }
}

pub struct BatchNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: BnStats<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: Tensor::param(&[channels], vec![T::one(); channels])?,
            beta: Tensor::param(&[channels], vec![T::zero(); channels])?,
            stats: BnStats::new(channels),
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(x.batch_norm(&self.gamma, &self.beta, &self.stats, mode, BN_EPS, BN_MOMENTUM)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    /// Running statistics: checkpointed but never optimized.
    pub fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.running_mean"), self.stats.mean.clone()));
        out.push((format!("{prefix}.running_var"), self.stats.var.clone()));
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Convolution followed by batch norm and ReLU; the bias lives in the norm.
pub struct ConvBnRelu<T: Scalar> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Scalar> ConvBnRelu<T> {
    pub fn new(
        init: &mut Initializer,
        c_in: usize,
        c_out: usize,
        k: usize,
        cfg: Conv2dCfg,
    ) -> Result<Self> {
        Ok(ConvBnRelu {
            conv: Conv2d::new(init, c_in, c_out, k, cfg, false)?,
            bn: BatchNorm::new(c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.bn.forward(&self.conv.forward(x)?, mode)?.relu().map_err(Into::into)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv.collect_params(&format!("{prefix}.conv"), out);
        self.bn.collect_params(&format!("{prefix}.bn"), out);
    }

    pub fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.bn.collect_buffers(&format!("{prefix}.bn"), out);
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }
}

pub struct Linear<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(init: &mut Initializer, f_in: usize, f_out: usize) -> Result<Self> {
        Ok(Linear {
            weight: Tensor::param(&[f_out, f_in], init.uniform_fan_in(f_out * f_in, f_in))?,
            bias: Tensor::param(&[f_out], init.uniform_fan_in(f_out, f_in))?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.linear(&self.weight, Some(&self.bias))?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
