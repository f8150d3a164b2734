//! The two-stage network.
//!
//! Stage one is the segmentation encoder-decoder; stage two attaches the
//! classification branch (spatial levels 4-6) on top of the level-3
//! features. Channel plan per level, width multiplier `w`, depth `d`:
//!
//! | level | entry conv (s2) | blocks          | output after sharing      |
//! |-------|-----------------|-----------------|---------------------------|
//! | 1     | 7x7, 3 -> 16    | -               | 16                        |
//! | 2     | 3x3 -> w        | 2 x (w -> w)    | w / w / 2w (none/add/cat) |
//! | 3     | 3x3 -> 2w       | d x (2w -> 2w)  | 2w / 2w / 4w              |
//! | 4     | 3x3 -> w        | 2 x (w -> w)    | w / w / 2w                |
//! | 5     | 3x3 -> w/2      | 2 x (w/2->w/2)  | w/2 / w/2 / w             |
//! | 6     | global pool     | FC 64, FC C     | -                         |
//!
//! Feature sharing fuses the level-entry convolution output with the last
//! block's output (channel counts match by construction); `concat` doubles
//! the level's output width, which is what the deeper entry convolution then
//! consumes. The decoder taps the pre-fusion block-stack outputs: three
//! decoding blocks at widths 2w, w, 16 with skip concatenations, a 1x1
//! classifier at half resolution, and a final x2 bilinear upsample. The
//! level-3 fusion feeds only the classification branch and is therefore
//! created together with it.

use crate::blocks::{Block, BlockSpec};
use crate::config::{NetworkConfig, Sharing};
use crate::error::{ModelError, Result};
use crate::init::Initializer;
use crate::layers::{BatchNorm, Conv2d, ConvBnRelu, Linear, Mode};
use ynet_tensor::{Conv2dCfg, Scalar, Tensor};

const STEM_CHANNELS: usize = 16;
const DEC1_CHANNELS: usize = 16;
const FC_HIDDEN: usize = 64;

/// Fuses a level's entry-conv output with its block-stack output.
enum Fusion<T: Scalar> {
    None,
    Add(BatchNorm<T>),
    Concat(BatchNorm<T>),
}

impl<T: Scalar> Fusion<T> {
    fn build(sharing: Sharing, conv_ch: usize, stack_ch: usize) -> Result<Self> {
        Ok(match sharing {
            Sharing::None => Fusion::None,
            Sharing::Add => {
                debug_assert_eq!(conv_ch, stack_ch);
                Fusion::Add(BatchNorm::new(stack_ch)?)
            }
            Sharing::Concat => Fusion::Concat(BatchNorm::new(conv_ch + stack_ch)?),
        })
    }

    fn out_channels(sharing: Sharing, conv_ch: usize, stack_ch: usize) -> usize {
        match sharing {
            Sharing::None | Sharing::Add => stack_ch,
            Sharing::Concat => conv_ch + stack_ch,
        }
    }

    fn forward(&self, conv_out: &Tensor<T>, stack_out: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Fusion::None => Ok(stack_out.clone()),
            Fusion::Add(bn) => Ok(bn.forward(&conv_out.add(stack_out)?, mode)?.relu()?),
            Fusion::Concat(bn) => {
                let cat = Tensor::concat(&[conv_out, stack_out], 0)?;
                Ok(bn.forward(&cat, mode)?.relu()?)
            }
        }
    }

    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        match self {
            Fusion::None => {}
            Fusion::Add(bn) | Fusion::Concat(bn) => bn.collect_params(&format!("{prefix}.bn"), out),
        }
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        match self {
            Fusion::None => {}
            Fusion::Add(bn) | Fusion::Concat(bn) => {
                bn.collect_buffers(&format!("{prefix}.bn"), out)
            }
        }
    }
}

/// Strided entry convolution plus a stack of same-width encoding blocks and
/// an optional sharing fusion.
struct EncoderLevel<T: Scalar> {
    entry: ConvBnRelu<T>,
    blocks: Vec<Block<T>>,
    fusion: Fusion<T>,
}

struct LevelOut<T: Scalar> {
    conv: Tensor<T>,
    stack: Tensor<T>,
    fused: Tensor<T>,
}

impl<T: Scalar> EncoderLevel<T> {
    fn build(
        init: &mut Initializer,
        config: &NetworkConfig,
        c_in: usize,
        width: usize,
        n_blocks: usize,
        with_fusion: bool,
    ) -> Result<Self> {
        let entry = ConvBnRelu::new(init, c_in, width, 3, Conv2dCfg::strided(2, 1))?;
        let blocks = (0..n_blocks)
            .map(|_| Block::build(BlockSpec::new(config.encoder, width, width), init))
            .collect::<Result<Vec<_>>>()?;
        let fusion = if with_fusion {
            Fusion::build(config.sharing, width, width)?
        } else {
            Fusion::None
        };
        Ok(EncoderLevel {
            entry,
            blocks,
            fusion,
        })
    }

    fn out_channels(config: &NetworkConfig, width: usize, with_fusion: bool) -> usize {
        if with_fusion {
            Fusion::<T>::out_channels(config.sharing, width, width)
        } else {
            width
        }
    }

    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<LevelOut<T>> {
        let conv = self.entry.forward(x, mode)?;
        let mut stack = conv.clone();
        for b in &self.blocks {
            stack = b.forward(&stack, mode)?;
        }
        let fused = self.fusion.forward(&conv, &stack, mode)?;
        Ok(LevelOut { conv, stack, fused })
    }

    fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.entry.collect_params(&format!("{prefix}.entry"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect_params(&format!("{prefix}.block{i}"), out);
        }
        self.fusion.collect_params(&format!("{prefix}.fusion"), out);
    }

    fn collect_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.entry.collect_buffers(&format!("{prefix}.entry"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect_buffers(&format!("{prefix}.block{i}"), out);
        }
        self.fusion.collect_buffers(&format!("{prefix}.fusion"), out);
    }
}

/// The classification branch: level-3 fusion, levels 4 and 5, global pool,
/// two fully connected layers.
struct Head<T: Scalar> {
    fusion3: Fusion<T>,
    level4: EncoderLevel<T>,
    level5: EncoderLevel<T>,
    fc1: Linear<T>,
    fc2: Linear<T>,
}

/// Joint forward output: full-resolution segmentation logits and the
/// diagnostic class logits.
#[derive(Debug)]
pub struct JointOutput<T: Scalar> {
    pub seg: Tensor<T>,
    pub cls: Tensor<T>,
}

pub struct YNet<T: Scalar> {
    config: NetworkConfig,
    stem: ConvBnRelu<T>,
    level2: EncoderLevel<T>,
    level3: EncoderLevel<T>,
    dec3: Block<T>,
    dec2: Block<T>,
    dec1: Block<T>,
    classifier: Conv2d<T>,
    head: Option<Head<T>>,
}

impl<T: Scalar> YNet<T> {
    /// Builds the segmentation stage (levels 1-3 plus decoder).
    pub fn build_segmentation(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(seed);
        let w = config.w;

        let stem = ConvBnRelu::new(&mut init, 3, STEM_CHANNELS, 7, Conv2dCfg::strided(2, 3))?;
        let level2 = EncoderLevel::build(&mut init, &config, STEM_CHANNELS, w, 2, true)?;
        let out2 = EncoderLevel::<T>::out_channels(&config, w, true);
        let level3 = EncoderLevel::build(&mut init, &config, out2, 2 * w, config.d, false)?;

        let dec = |init: &mut Initializer, c_in: usize, c_out: usize| {
            Block::build(BlockSpec::new(config.decoder, c_in, c_out), init)
        };
        let dec3 = dec(&mut init, 2 * w + w, 2 * w)?;
        let dec2 = dec(&mut init, 2 * w + STEM_CHANNELS, w)?;
        let dec1 = dec(&mut init, w, DEC1_CHANNELS)?;
        let classifier = Conv2d::new(
            &mut init,
            DEC1_CHANNELS,
            config.tissue_classes,
            1,
            Conv2dCfg::default(),
            true,
        )?;

        Ok(YNet {
            config,
            stem,
            level2,
            level3,
            dec3,
            dec2,
            dec1,
            classifier,
            head: None,
        })
    }

    /// Adds the classification branch with freshly initialized parameters.
    pub fn attach_classification_head(&mut self, seed: u64) -> Result<()> {
        if self.head.is_some() {
            return Err(ModelError::Config(
                "classification head is already attached".into(),
            ));
        }
        let mut init = Initializer::new(seed);
        let config = &self.config;
        let w = config.w;

        let fusion3 = Fusion::build(config.sharing, 2 * w, 2 * w)?;
        let f3_ch = Fusion::<T>::out_channels(config.sharing, 2 * w, 2 * w);
        let level4 = EncoderLevel::build(&mut init, config, f3_ch, w, 2, true)?;
        let out4 = EncoderLevel::<T>::out_channels(config, w, true);
        let level5 = EncoderLevel::build(&mut init, config, out4, w / 2, 2, true)?;
        let out5 = EncoderLevel::<T>::out_channels(config, w / 2, true);
        let fc1 = Linear::new(&mut init, out5, FC_HIDDEN)?;
        let fc2 = Linear::new(&mut init, FC_HIDDEN, config.diagnostic_classes)?;

        self.head = Some(Head {
            fusion3,
            level4,
            level5,
            fc1,
            fc2,
        });
        Ok(())
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    fn check_input(&self, x: &Tensor<T>, joint: bool) -> Result<()> {
        if x.rank() != 3 || x.shape()[0] != 3 {
            return Err(ModelError::Shape(format!(
                "instance must be [3,H,W], got {:?}",
                x.shape()
            )));
        }
        let multiple = if joint { 32 } else { 8 };
        let (h, w) = (x.shape()[1], x.shape()[2]);
        if h % multiple != 0 || w % multiple != 0 {
            return Err(ModelError::Shape(format!(
                "spatial size {}x{} must be divisible by {} in {} mode",
                h,
                w,
                multiple,
                if joint { "joint" } else { "seg" }
            )));
        }
        Ok(())
    }

    /// Encoder + decoder; returns (level-3 conv out, level-3 stack out,
    /// full-resolution segmentation logits).
    fn seg_path(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let x1 = self.stem.forward(x, mode)?;
        let l2 = self.level2.forward(&x1, mode)?;
        let l3 = self.level3.forward(&l2.fused, mode)?;

        let up3 = l3.stack.bilinear_upsample(2)?;
        let d3 = self.dec3.forward(&Tensor::concat(&[&up3, &l2.stack], 0)?, mode)?;
        let up2 = d3.bilinear_upsample(2)?;
        let d2 = self.dec2.forward(&Tensor::concat(&[&up2, &x1], 0)?, mode)?;
        let d1 = self.dec1.forward(&d2, mode)?;
        let logits_half = self.classifier.forward(&d1)?;
        let seg = logits_half.bilinear_upsample(2)?;
        Ok((l3.conv, l3.stack, seg))
    }

    /// Segmentation logits `[tissue_classes, H, W]` for a `[3,H,W]` instance.
    pub fn forward_seg(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x, false)?;
        let (_, _, seg) = self.seg_path(x, mode)?;
        Ok(seg)
    }

    /// Both output arms; requires the classification head.
    pub fn forward_joint(&self, x: &Tensor<T>, mode: Mode) -> Result<JointOutput<T>> {
        let head = self.head.as_ref().ok_or_else(|| {
            ModelError::Config("classification head is not attached".into())
        })?;
        self.check_input(x, true)?;
        let (c3, s3, seg) = self.seg_path(x, mode)?;

        let f3 = head.fusion3.forward(&c3, &s3, mode)?;
        let l4 = head.level4.forward(&f3, mode)?;
        let l5 = head.level5.forward(&l4.fused, mode)?;
        let pooled = l5.fused.adaptive_avg_pool(1, 1)?;
        let flat = pooled.reshape(&[1, pooled.len()])?;
        let hidden = head.fc1.forward(&flat)?.relu()?;
        let cls = head.fc2.forward(&hidden)?;
        Ok(JointOutput { seg, cls })
    }

    /// Trainable tensors in a fixed construction order.
    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.stem.collect_params("stem", &mut out);
        self.level2.collect_params("enc2", &mut out);
        self.level3.collect_params("enc3", &mut out);
        self.dec3.collect_params("dec3", &mut out);
        self.dec2.collect_params("dec2", &mut out);
        self.dec1.collect_params("dec1", &mut out);
        self.classifier.collect_params("classifier", &mut out);
        if let Some(head) = &self.head {
            head.fusion3.collect_params("head.fusion3", &mut out);
            head.level4.collect_params("head.enc4", &mut out);
            head.level5.collect_params("head.enc5", &mut out);
            head.fc1.collect_params("head.fc1", &mut out);
            head.fc2.collect_params("head.fc2", &mut out);
        }
        out
    }

    /// Params plus batch-norm running stats: everything a checkpoint stores.
    pub fn state(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.params();
        self.stem.collect_buffers("stem", &mut out);
        self.level2.collect_buffers("enc2", &mut out);
        self.level3.collect_buffers("enc3", &mut out);
        self.dec3.collect_buffers("dec3", &mut out);
        self.dec2.collect_buffers("dec2", &mut out);
        self.dec1.collect_buffers("dec1", &mut out);
        if let Some(head) = &self.head {
            head.fusion3.collect_buffers("head.fusion3", &mut out);
            head.level4.collect_buffers("head.enc4", &mut out);
            head.level5.collect_buffers("head.enc5", &mut out);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn head_param_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|(name, _)| name.starts_with("head."))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Copies stored tensors into this network by name. The name sets must
    /// match exactly.
    pub fn load_state(&self, entries: &[(String, Vec<T>, Vec<usize>)]) -> Result<()> {
        let state = self.state();
        if state.len() != entries.len() {
            return Err(ModelError::Checkpoint(format!(
                "checkpoint has {} tensors, network expects {}",
                entries.len(),
                state.len()
            )));
        }
        let by_name: std::collections::HashMap<&str, &Tensor<T>> =
            state.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (name, data, shape) in entries {
            let t = by_name.get(name.as_str()).ok_or_else(|| {
                ModelError::Checkpoint(format!("unexpected tensor `{name}` in checkpoint"))
            })?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    shape,
                    t.shape()
                )));
            }
            t.set_data(data)?;
        }
        Ok(())
    }
}

/// `L = L_seg + L_cls`, both multinomial cross-entropies, unweighted.
pub fn multi_task_loss<T: Scalar>(
    seg_logits: &Tensor<T>,
    seg_targets: &[usize],
    cls_logits: &Tensor<T>,
    cls_target: usize,
) -> Result<Tensor<T>> {
    let l_seg = seg_logits.softmax_cross_entropy(seg_targets, None)?;
    let l_cls = cls_logits.softmax_cross_entropy(&[cls_target], None)?;
    Ok(l_seg.add(&l_cls)?)
}
