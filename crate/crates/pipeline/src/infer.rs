//! ROI-level inference: tile, run the network per instance in eval mode,
//! stitch the probabilities, and collect per-instance confidences.

use crate::error::Result;
use crate::roi::{RoiImage, SegMask};
use crate::stitch::stitch_seg;
use crate::tiling::{extract_instances, plan_grid, InstanceGrid};
use ynet_model::{Mode, YNet};

pub struct RoiInference {
    pub grid: InstanceGrid,
    pub mask: SegMask,
    /// Per-instance diagnostic class probabilities (softmax of the head).
    pub zbars: Vec<Vec<f32>>,
    /// Per-instance max(zbar).
    pub confidences: Vec<f32>,
}

/// Runs the joint network over every instance of one ROI.
pub fn infer_roi(
    net: &YNet<f32>,
    roi: &RoiImage,
    instance_size: usize,
    overlap: usize,
) -> Result<RoiInference> {
    let grid = plan_grid(roi.width, roi.height, instance_size, overlap)?;
    let instances = extract_instances(roi, &grid)?;
    let classes = net.config().tissue_classes;

    let mut probs = Vec::with_capacity(instances.len());
    let mut zbars = Vec::with_capacity(instances.len());
    let mut confidences = Vec::with_capacity(instances.len());
    for inst in &instances {
        let out = net.forward_joint(&inst.image, Mode::Eval)?;
        probs.push(out.seg.softmax()?.to_vec());
        let zbar = out.cls.softmax()?.to_vec();
        confidences.push(zbar.iter().cloned().fold(f32::NEG_INFINITY, f32::max));
        zbars.push(zbar);
    }

    let mask = stitch_seg(&grid, &probs, classes)?;
    Ok(RoiInference {
        grid,
        mask,
        zbars,
        confidences,
    })
}

/// Segmentation-only variant (no head required): stitched mask only.
pub fn infer_roi_seg(
    net: &YNet<f32>,
    roi: &RoiImage,
    instance_size: usize,
    overlap: usize,
) -> Result<(InstanceGrid, SegMask)> {
    let grid = plan_grid(roi.width, roi.height, instance_size, overlap)?;
    let instances = extract_instances(roi, &grid)?;
    let classes = net.config().tissue_classes;
    let mut probs = Vec::with_capacity(instances.len());
    for inst in &instances {
        let seg = net.forward_seg(&inst.image, Mode::Eval)?;
        probs.push(seg.softmax()?.to_vec());
    }
    let mask = stitch_seg(&grid, &probs, classes)?;
    Ok((grid, mask))
}
