//! The two training loops: segmentation-only, and joint segmentation plus
//! classification. Both are deterministic in the config seed: the
//! train/validation split, per-epoch ordering, and per-sample augmentation
//! draws all derive from it.

use crate::augment;
use crate::error::{PipelineError, Result};
use crate::metrics::ConfusionMatrix;
use crate::roi::{RoiImage, SegMask};
use crate::schedule::{lr_at, TrainConfig};
use crate::tiling::{extract_instances, extract_mask_patch, plan_grid};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ynet_model::ynet::multi_task_loss;
use ynet_model::{Mode, YNet};
use ynet_tensor::{optim::Sgd, Tensor};

/// One training instance for the segmentation stage.
pub struct SegSample {
    pub image: Vec<f32>, // [3, size, size]
    pub mask: Vec<u8>,   // [size, size]
    pub size: usize,
}

/// One training instance for the joint stage; the diagnosis label is the
/// parent ROI's.
pub struct JointSample {
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
    pub size: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Segmentation/classification components (joint training only).
    pub seg_loss: Option<f64>,
    pub cls_loss: Option<f64>,
    pub val_miou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl History {
    pub fn to_csv(&self) -> String {
        let joint = self.records.iter().any(|r| r.seg_loss.is_some());
        let mut out = String::from(if joint {
            "epoch,lr,train_loss,val_loss,seg_loss,cls_loss,miou\n"
        } else {
            "epoch,lr,train_loss,val_loss,miou\n"
        });
        for r in &self.records {
            if joint {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.epoch,
                    r.lr,
                    r.train_loss,
                    r.val_loss,
                    r.seg_loss.unwrap_or(f64::NAN),
                    r.cls_loss.unwrap_or(f64::NAN),
                    r.val_miou
                ));
            } else {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.epoch, r.lr, r.train_loss, r.val_loss, r.val_miou
                ));
            }
        }
        out
    }
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        ^ b.wrapping_mul(0x9e3779b97f4a7c15)
        ^ c.wrapping_mul(0xd6e8feb86659fd93);
    z = (z ^ (z >> 32)).wrapping_mul(0xd6e8feb86659fd93);
    z ^ (z >> 32)
}

/// Deterministic train/validation index split (at least one sample each).
fn split_indices(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(PipelineError::Input(format!(
            "need at least 2 samples to split train/val, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5011, 0));
    idx.shuffle(&mut rng);
    let val_n = ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx[..val_n].to_vec();
    let train = idx[val_n..].to_vec();
    Ok((train, val))
}

struct Snapshot(Vec<Vec<f32>>);

fn snapshot(net: &YNet<f32>) -> Snapshot {
    Snapshot(net.state().iter().map(|(_, t)| t.to_vec()).collect())
}

fn restore(net: &YNet<f32>, snap: &Snapshot) -> Result<()> {
    for ((_, t), data) in net.state().iter().zip(&snap.0) {
        t.set_data(data)?;
    }
    Ok(())
}

fn targets_of(mask: &[u8]) -> Vec<usize> {
    mask.iter().map(|&b| b as usize).collect()
}

/// Settles batch-norm running statistics at the final weights: a few
/// forward-only passes over the unaugmented training samples. Without this
/// the running estimates lag the last optimizer steps and eval-mode forwards
/// see stale normalization.
fn refresh_bn_stats(
    net: &YNet<f32>,
    images: impl Iterator<Item = (Vec<f32>, usize)> + Clone,
    joint: bool,
) -> Result<()> {
    for _ in 0..2 {
        for (image, size) in images.clone() {
            let x = Tensor::from_vec(&[3, size, size], image)?;
            if joint {
                net.forward_joint(&x, Mode::Train)?;
            } else {
                net.forward_seg(&x, Mode::Train)?;
            }
        }
    }
    Ok(())
}

/// Mean eval-mode pixel accuracy over samples (no augmentation).
pub fn seg_pixel_accuracy(net: &YNet<f32>, samples: &[SegSample]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        let x = Tensor::from_vec(&[3, s.size, s.size], s.image.clone())?;
        let logits = net.forward_seg(&x, Mode::Eval)?;
        let preds = argmax_mask(&logits, net.config().tissue_classes, s.size);
        hits += preds
            .iter()
            .zip(&s.mask)
            .filter(|(p, g)| *p == *g)
            .count();
        total += s.mask.len();
    }
    Ok(hits as f64 / total as f64)
}

fn argmax_mask(logits: &Tensor<f32>, classes: usize, size: usize) -> Vec<u8> {
    let data = logits.data();
    let plane = size * size;
    let mut out = vec![0u8; plane];
    for p in 0..plane {
        let mut best = 0usize;
        let mut best_v = f32::NEG_INFINITY;
        for c in 0..classes {
            let v = data[c * plane + p];
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        out[p] = best as u8;
    }
    out
}

/// First stage: train for segmentation alone. Returns the per-epoch history;
/// the network is left at the best-validation-loss state.
pub fn train_segmentation(
    net: &YNet<f32>,
    samples: &[SegSample],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    let (train_idx, val_idx) = split_indices(samples.len(), cfg)?;
    let opt = Sgd::new(net.params());
    let classes = net.config().tissue_classes;

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Snapshot)> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut order = train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0xe60c, epoch as u64)));

        let mut train_loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let s = &samples[i];
                let (img, mask) = if cfg.augment {
                    let mut aug_rng =
                        ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, i as u64));
                    augment::augment(&s.image, &s.mask, s.size, &mut aug_rng)
                } else {
                    (s.image.clone(), s.mask.clone())
                };
                let x = Tensor::from_vec(&[3, s.size, s.size], img)?;
                let logits = net.forward_seg(&x, Mode::Train)?;
                let loss = logits.softmax_cross_entropy(&targets_of(&mask), None)?;
                let v = loss.item()? as f64;
                if !v.is_finite() {
                    return Err(PipelineError::Numeric(format!(
                        "seg loss became {v} at epoch {epoch}"
                    )));
                }
                train_loss_sum += v;
                loss.scale(1.0 / batch.len() as f64)?.backward()?;
            }
            opt.step(lr)?;
        }
        let train_loss = train_loss_sum / train_idx.len() as f64;

        // validation pass, eval mode, no augmentation
        let mut val_loss_sum = 0.0f64;
        let mut cm = ConfusionMatrix::new(classes);
        for &i in &val_idx {
            let s = &samples[i];
            let x = Tensor::from_vec(&[3, s.size, s.size], s.image.clone())?;
            let logits = net.forward_seg(&x, Mode::Eval)?;
            let loss = logits.softmax_cross_entropy(&targets_of(&s.mask), None)?;
            val_loss_sum += loss.item()? as f64;
            for (p, g) in argmax_mask(&logits, classes, s.size).iter().zip(&s.mask) {
                cm.add(*p as usize, *g as usize);
            }
        }
        let val_loss = val_loss_sum / val_idx.len() as f64;

        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, snapshot(net)));
        }
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            seg_loss: None,
            cls_loss: None,
            val_miou: cm.miou(),
        });
    }

    let (_, best_epoch, snap) = best.expect("at least one epoch ran");
    restore(net, &snap)?;
    refresh_bn_stats(
        net,
        train_idx.iter().map(|&i| (samples[i].image.clone(), samples[i].size)),
        false,
    )?;
    Ok(History {
        records,
        best_epoch,
    })
}

/// Second stage: joint optimization of `L_seg + L_cls` with both components
/// logged. The head must be attached.
pub fn train_joint(
    net: &YNet<f32>,
    samples: &[JointSample],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if !net.has_head() {
        return Err(PipelineError::Input(
            "joint training requires the classification head".into(),
        ));
    }
    let (train_idx, val_idx) = split_indices(samples.len(), cfg)?;
    let opt = Sgd::new(net.params());
    let classes = net.config().tissue_classes;

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Snapshot)> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut order = train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x301e, epoch as u64)));

        let mut seg_sum = 0.0f64;
        let mut cls_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let s = &samples[i];
                let (img, mask) = if cfg.augment {
                    let mut aug_rng =
                        ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, i as u64));
                    augment::augment(&s.image, &s.mask, s.size, &mut aug_rng)
                } else {
                    (s.image.clone(), s.mask.clone())
                };
                let x = Tensor::from_vec(&[3, s.size, s.size], img)?;
                let out = net.forward_joint(&x, Mode::Train)?;
                let l_seg = out.seg.softmax_cross_entropy(&targets_of(&mask), None)?;
                let l_cls = out.cls.softmax_cross_entropy(&[s.label], None)?;
                seg_sum += l_seg.item()? as f64;
                cls_sum += l_cls.item()? as f64;
                let loss = l_seg.add(&l_cls)?;
                let v = loss.item()? as f64;
                if !v.is_finite() {
                    return Err(PipelineError::Numeric(format!(
                        "joint loss became {v} at epoch {epoch}"
                    )));
                }
                loss.scale(1.0 / batch.len() as f64)?.backward()?;
            }
            opt.step(lr)?;
        }
        let n = train_idx.len() as f64;
        let (seg_loss, cls_loss) = (seg_sum / n, cls_sum / n);

        let mut val_sum = 0.0f64;
        let mut cm = ConfusionMatrix::new(classes);
        for &i in &val_idx {
            let s = &samples[i];
            let x = Tensor::from_vec(&[3, s.size, s.size], s.image.clone())?;
            let out = net.forward_joint(&x, Mode::Eval)?;
            let loss = multi_task_loss(&out.seg, &targets_of(&s.mask), &out.cls, s.label)?;
            val_sum += loss.item()? as f64;
            for (p, g) in argmax_mask(&out.seg, classes, s.size).iter().zip(&s.mask) {
                cm.add(*p as usize, *g as usize);
            }
        }
        let val_loss = val_sum / val_idx.len() as f64;

        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, snapshot(net)));
        }
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss: seg_loss + cls_loss,
            val_loss,
            seg_loss: Some(seg_loss),
            cls_loss: Some(cls_loss),
            val_miou: cm.miou(),
        });
    }

    let (_, best_epoch, snap) = best.expect("at least one epoch ran");
    restore(net, &snap)?;
    refresh_bn_stats(
        net,
        train_idx.iter().map(|&i| (samples[i].image.clone(), samples[i].size)),
        true,
    )?;
    Ok(History {
        records,
        best_epoch,
    })
}

/// Tiles each (image, mask) ROI into segmentation samples.
pub fn seg_samples_from_rois(
    rois: &[(RoiImage, SegMask)],
    instance_size: usize,
    overlap: usize,
) -> Result<Vec<SegSample>> {
    let mut samples = Vec::new();
    for (image, mask) in rois {
        let grid = plan_grid(image.width, image.height, instance_size, overlap)?;
        for inst in extract_instances(image, &grid)? {
            samples.push(SegSample {
                image: inst.image.to_vec(),
                mask: extract_mask_patch(mask, inst.origin, instance_size),
                size: instance_size,
            });
        }
    }
    Ok(samples)
}

/// Tiles labeled ROIs into joint samples; every instance inherits its parent
/// ROI's diagnosis.
pub fn joint_samples_from_rois(
    rois: &[(RoiImage, SegMask, u8)],
    instance_size: usize,
    overlap: usize,
) -> Result<Vec<JointSample>> {
    let mut samples = Vec::new();
    for (image, mask, label) in rois {
        let grid = plan_grid(image.width, image.height, instance_size, overlap)?;
        for inst in extract_instances(image, &grid)? {
            samples.push(JointSample {
                image: inst.image.to_vec(),
                mask: extract_mask_patch(mask, inst.origin, instance_size),
                size: instance_size,
                label: *label as usize,
            });
        }
    }
    Ok(samples)
}
