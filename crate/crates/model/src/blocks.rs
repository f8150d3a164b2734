//! The interchangeable convolutional blocks.
//!
//! Every block maps `[C_in, H, W] -> [C_out, H, W]` (spatial size is
//! preserved), so encoder and decoder slots accept any registered kind and
//! the network topology never changes when blocks are swapped.
//!
//! Internals follow the designs the block names come from:
//! - RCB: two 3x3 conv+BN with a shortcut (projection when channels change).
//! - ESP: a 1x1 reduction to `C_out/4`, four parallel 3x3 convolutions at
//!   dilations 1/2/4/8 whose outputs are hierarchically summed before
//!   concatenation (suppresses gridding), residual add when shapes allow.
//! - PSP: average pooling to 1/2/3/6-cell grids, 1x1 conv per scale,
//!   upsampling back, concatenation with a projected input, 3x3 fusion.

use crate::error::{ModelError, Result};
use crate::init::Initializer;
use crate::layers::{BatchNorm, Conv2d, ConvBnRelu, Mode};
use ynet_tensor::{Conv2dCfg, Scalar, Tensor};

/// The registered block families. Names appear verbatim in configs and CLI
/// flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Esp,
    Rcb,
    Psp,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::Esp, BlockKind::Rcb, BlockKind::Psp];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Esp => "esp",
            BlockKind::Rcb => "rcb",
            BlockKind::Psp => "psp",
        }
    }
}

impl std::str::FromStr for BlockKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esp" => Ok(BlockKind::Esp),
            "rcb" => Ok(BlockKind::Rcb),
            "psp" => Ok(BlockKind::Psp),
            other => Err(ModelError::Config(format!(
                "unknown block kind `{other}` (registered: esp, rcb, psp)"
            ))),
        }
    }
}

impl std::fmt::Display for BlockKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What to build: kind plus channel contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub c_in: usize,
    pub c_out: usize,
}

impl BlockSpec {
    pub fn new(kind: BlockKind, c_in: usize, c_out: usize) -> Self {
        BlockSpec { kind, c_in, c_out }
    }
}

pub const ESP_BRANCHES: usize = 4;
pub const ESP_DILATIONS: [usize; ESP_BRANCHES] = [1, 2, 4, 8];
pub const PSP_BINS: [usize; 4] = [1, 2, 3, 6];

pub struct RcbBlock<T: Scalar> {
    conv1: ConvBnRelu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm<T>,
    proj: Option<(Conv2d<T>, BatchNorm<T>)>,
}

impl<T: Scalar> RcbBlock<T> {
    fn new(init: &mut Initializer, c_in: usize, c_out: usize) -> Result<Self> {
        let proj = if c_in == c_out {
            None
        } else {
            Some((
                Conv2d::new(init, c_in, c_out, 1, Conv2dCfg::default(), false)?,
                BatchNorm::new(c_out)?,
            ))
        };
        Ok(RcbBlock {
            conv1: ConvBnRelu::new(init, c_in, c_out, 3, Conv2dCfg::strided(1, 1))?,
            conv2: Conv2d::new(init, c_out, c_out, 3, Conv2dCfg::strided(1, 1), false)?,
            bn2: BatchNorm::new(c_out)?,
            proj,
        })
    }

    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let main = self.conv1.forward(x, mode)?;
        let main = self.bn2.forward(&self.conv2.forward(&main)?, mode)?;
        let shortcut = match &self.proj {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, mode)?,
            None => x.clone(),
        };
        Ok(main.add(&shortcut)?.relu()?)
    }
}

pub struct EspBlock<T: Scalar> {
    reduce: ConvBnRelu<T>,
    branches: Vec<Conv2d<T>>,
    out_bn: BatchNorm<T>,
    residual: bool,
}

impl<T: Scalar> EspBlock<T> {
    fn new(init: &mut Initializer, c_in: usize, c_out: usize) -> Result<Self> {
        if c_out % ESP_BRANCHES != 0 {
            return Err(ModelError::Config(format!(
                "esp block needs out-channels divisible by {} (got {}); pick a width multiple of {}",
                ESP_BRANCHES, c_out, ESP_BRANCHES
            )));
        }
        let n = c_out / ESP_BRANCHES;
        let branches = ESP_DILATIONS
            .iter()
            .map(|&d| Conv2d::new(init, n, n, 3, Conv2dCfg::dilated(d, d), false))
            .collect::<Result<Vec<_>>>()?;
        Ok(EspBlock {
            reduce: ConvBnRelu::new(init, c_in, n, 1, Conv2dCfg::default())?,
            branches,
            out_bn: BatchNorm::new(c_out)?,
            residual: c_in == c_out,
        })
    }

    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let reduced = self.reduce.forward(x, mode)?;
        // Hierarchical feature fusion: each branch adds the previous sum.
        let mut sums: Vec<Tensor<T>> = Vec::with_capacity(self.branches.len());
        for (i, branch) in self.branches.iter().enumerate() {
            let d = branch.forward(&reduced)?;
            let s = if i == 0 { d } else { sums[i - 1].add(&d)? };
            sums.push(s);
        }
        let refs: Vec<&Tensor<T>> = sums.iter().collect();
        let cat = Tensor::concat(&refs, 0)?;
        let out = self.out_bn.forward(&cat, mode)?.relu()?;
        if self.residual {
            Ok(out.add(x)?)
        } else {
            Ok(out)
        }
    }
}

pub struct PspBlock<T: Scalar> {
    // conv + ReLU per bin size; no norm here, a batch norm over the 1x1
    // pooled map would see batch-of-one statistics and zero it out.
    pool_branches: Vec<Conv2d<T>>,
    proj: ConvBnRelu<T>,
    fuse: ConvBnRelu<T>,
}

impl<T: Scalar> PspBlock<T> {
    fn new(init: &mut Initializer, c_in: usize, c_out: usize) -> Result<Self> {
        let bins = PSP_BINS.len();
        if c_out % bins != 0 {
            return Err(ModelError::Config(format!(
                "psp block needs out-channels divisible by {} (got {}); pick a width multiple of {}",
                bins, c_out, bins
            )));
        }
        let per_branch = c_out / bins;
        let pool_branches = PSP_BINS
            .iter()
            .map(|_| Conv2d::new(init, c_in, per_branch, 1, Conv2dCfg::default(), true))
            .collect::<Result<Vec<_>>>()?;
        Ok(PspBlock {
            pool_branches,
            proj: ConvBnRelu::new(init, c_in, c_out, 1, Conv2dCfg::default())?,
            // concat width: c_out (proj) + 4 * c_out/4
            fuse: ConvBnRelu::new(init, 2 * c_out, c_out, 3, Conv2dCfg::strided(1, 1))?,
        })
    }

    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let largest = *PSP_BINS.iter().max().unwrap();
        if h < largest || w < largest {
            return Err(ModelError::Config(format!(
                "psp block needs spatial dims >= {} (got {}x{})",
                largest, h, w
            )));
        }
        let mut parts: Vec<Tensor<T>> = vec![self.proj.forward(x, mode)?];
        for (bin, branch) in PSP_BINS.iter().zip(&self.pool_branches) {
            let pooled = x.adaptive_avg_pool(*bin, *bin)?;
            let conv = branch.forward(&pooled)?.relu()?;
            parts.push(conv.resize_bilinear(h, w)?);
        }
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        let cat = Tensor::concat(&refs, 0)?;
        self.fuse.forward(&cat, mode)
    }
}

/// A built block; construct through [`Block::build`].
pub enum Block<T: Scalar> {
    Esp(EspBlock<T>),
    Rcb(RcbBlock<T>),
    Psp(PspBlock<T>),
    /// Parameter-free pass-through, for tests and plumbing.
    Identity { channels: usize },
}

impl<T: Scalar> Block<T> {
    /// The registry entry point: resolves the kind and builds its parameters.
    pub fn build(spec: BlockSpec, init: &mut Initializer) -> Result<Self> {
        if spec.c_in == 0 || spec.c_out == 0 {
            return Err(ModelError::Config("block channels must be positive".into()));
        }
        Ok(match spec.kind {
            BlockKind::Esp => Block::Esp(EspBlock::new(init, spec.c_in, spec.c_out)?),
            BlockKind::Rcb => Block::Rcb(RcbBlock::new(init, spec.c_in, spec.c_out)?),
            BlockKind::Psp => Block::Psp(PspBlock::new(init, spec.c_in, spec.c_out)?),
        })
    }

    pub fn identity(channels: usize) -> Self {
        Block::Identity { channels }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Block::Esp(b) => b.forward(x, mode),
            Block::Rcb(b) => b.forward(x, mode),
            Block::Psp(b) => b.forward(x, mode),
            Block::Identity { channels } => {
                if x.shape()[0] != *channels {
                    return Err(ModelError::Shape(format!(
                        "identity block expects {} channels, got {}",
                        channels,
                        x.shape()[0]
                    )));
                }
                Ok(x.clone())
            }
        }
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        match self {
            Block::Esp(b) => {
                b.reduce.collect_params(&format!("{prefix}.reduce"), out);
                for (i, br) in b.branches.iter().enumerate() {
                    br.collect_params(&format!("{prefix}.branch{i}"), out);
                }
                b.out_bn.collect_params(&format!("{prefix}.out_bn"), out);
            }
            Block::Rcb(b) => {
                b.conv1.collect_params(&format!("{prefix}.conv1"), out);
                b.conv2.collect_params(&format!("{prefix}.conv2"), out);
                b.bn2.collect_params(&format!("{prefix}.bn2"), out);
                if let Some((conv, bn)) = &b.proj {
                    conv.collect_params(&format!("{prefix}.proj.conv"), out);
                    bn.collect_params(&format!("{prefix}.proj.bn"), out);
                }
            }
            Block::Psp(b) => {
                for (i, br) in b.pool_branches.iter().enumerate() {
                    br.collect_params(&format!("{prefix}.pool{i}"), out);
                }
                b.proj.collect_params(&format!("{prefix}.proj"), out);
                b.fuse.collect_params(&format!("{prefix}.fuse"), out);
            }
            Block::Identity { .. } => {}
        }
    }

    pub fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        match self {
            Block::Esp(b) => {
                b.reduce.collect_buffers(&format!("{prefix}.reduce"), out);
                b.out_bn.collect_buffers(&format!("{prefix}.out_bn"), out);
            }
            Block::Rcb(b) => {
                b.conv1.collect_buffers(&format!("{prefix}.conv1"), out);
                b.bn2.collect_buffers(&format!("{prefix}.bn2"), out);
                if let Some((_, bn)) = &b.proj {
                    bn.collect_buffers(&format!("{prefix}.proj.bn"), out);
                }
            }
            Block::Psp(b) => {
                b.proj.collect_buffers(&format!("{prefix}.proj"), out);
                b.fuse.collect_buffers(&format!("{prefix}.fuse"), out);
            }
            Block::Identity { .. } => {}
        }
    }

    /// Exact number of trainable scalars (conv kernels, BN affine, biases).
    pub fn param_count(&self) -> usize {
        let mut params = Vec::new();
        self.collect_params("b", &mut params);
        params.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Finite-difference checks for each block family at f64.
///
/// Inputs cover both parameters and activations; one report per kind.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<ynet_tensor::gradcheck::GradCheckReport>> {
    use ynet_tensor::gradcheck::{grad_check, suite::DEFAULT_STEP, suite::DEFAULT_TOLERANCE};

    let cases: [(BlockKind, usize, usize, usize); 3] = [
        (BlockKind::Rcb, 8, 6, 6),
        (BlockKind::Esp, 8, 6, 6),
        (BlockKind::Psp, 8, 12, 12),
    ];
    let mut reports = Vec::new();
    for (i, (kind, ch, h, w)) in cases.into_iter().enumerate() {
        let mut init = Initializer::new(seed.wrapping_add(i as u64));
        let block: Block<f64> = Block::build(BlockSpec::new(kind, ch, ch), &mut init)?;

        let x = Tensor::param(&[ch, h, w], init.uniform_fan_in(ch * h * w, 1))?;
        let mut inputs = vec![x];
        let mut named = Vec::new();
        block.collect_params("b", &mut named);
        // Move every parameter off its default: a zero BN beta parks
        // activations exactly on the ReLU kink, where one-sided and central
        // differences legitimately disagree.
        for (_, t) in &named {
            let vals: Vec<f64> = init
                .uniform_fan_in::<f64>(t.len(), 4)
                .into_iter()
                .map(|v: f64| v + 0.15 * v.signum() + if v == 0.0 { 0.15 } else { 0.0 })
                .collect();
            t.set_data(&vals)?;
        }
        inputs.extend(named.into_iter().map(|(_, t)| t));

        // Fixed projection so the scalarized objective is a pure function.
        let proj: Vec<f64> = Initializer::new(seed ^ 0x70_06).uniform_fan_in(ch * h * w, 1);
        let proj = proj.into_iter().map(|v| 0.6 + v.abs()).collect::<Vec<_>>();
        let name = format!("block {}", kind.name());
        let report = grad_check(
            &name,
            move |ins| {
                let y = block.forward(&ins[0], Mode::Train).map_err(|e| {
                    ynet_tensor::TensorError::Numeric {
                        op: "block",
                        detail: e.to_string(),
                    }
                })?;
                let p = Tensor::from_vec(y.shape(), proj.clone())?;
                y.mul(&p)?.sum_all()
            },
            &inputs,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?;
        reports.push(report);
    }
    Ok(reports)
}

/// Parameter count from the layer formulas alone, without building anything.
/// Kept separate from the constructors so tests can cross-check the two.
pub fn param_count_formula(spec: BlockSpec) -> usize {
    let (ci, co) = (spec.c_in, spec.c_out);
    match spec.kind {
        BlockKind::Rcb => {
            let proj = if ci == co { 0 } else { ci * co + 2 * co };
            9 * ci * co + 2 * co + 9 * co * co + 2 * co + proj
        }
        BlockKind::Esp => {
            let n = co / ESP_BRANCHES;
            ci * n + 2 * n + ESP_BRANCHES * 9 * n * n + 2 * co
        }
        BlockKind::Psp => {
            let per = co / PSP_BINS.len();
            let branches = PSP_BINS.len() * (ci * per + per); // conv + bias
            let proj = ci * co + 2 * co;
            let fuse = 9 * (2 * co) * co + 2 * co;
            branches + proj + fuse
        }
    }
}
