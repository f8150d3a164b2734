//! ROI-to-instance geometry: overlapping tile grids and patch extraction.

use crate::error::{PipelineError, Result};
use crate::roi::{RoiImage, SegMask};
use ynet_tensor::Tensor;

pub const DEFAULT_INSTANCE_SIZE: usize = 384;
pub const DEFAULT_OVERLAP: usize = 56;

/// The tile layout over one ROI. Origins step by `size - overlap`; the last
/// origin per axis snaps to the border so every pixel is covered without
/// padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceGrid {
    pub roi_width: usize,
    pub roi_height: usize,
    pub instance_size: usize,
    pub overlap: usize,
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(extent: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = extent - size;
    let mut xs: Vec<usize> = (0..)
        .map(|i| i * stride)
        .take_while(|&x| x < last)
        .collect();
    xs.push(last);
    xs
}

pub fn plan_grid(
    roi_width: usize,
    roi_height: usize,
    instance_size: usize,
    overlap: usize,
) -> Result<InstanceGrid> {
    if instance_size == 0 || overlap >= instance_size {
        return Err(PipelineError::Geometry(format!(
            "overlap {} must be smaller than instance size {}",
            overlap, instance_size
        )));
    }
    if roi_width < instance_size || roi_height < instance_size {
        return Err(PipelineError::Geometry(format!(
            "ROI {}x{} is smaller than the {}px instance",
            roi_width, roi_height, instance_size
        )));
    }
    let stride = instance_size - overlap;
    let xs = axis_origins(roi_width, instance_size, stride);
    let ys = axis_origins(roi_height, instance_size, stride);
    let mut origins = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            origins.push((x, y));
        }
    }
    Ok(InstanceGrid {
        roi_width,
        roi_height,
        instance_size,
        overlap,
        origins,
    })
}

impl InstanceGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// How many instances cover each pixel (coverage invariant: >= 1).
    pub fn coverage(&self) -> Vec<u32> {
        let mut cov = vec![0u32; self.roi_width * self.roi_height];
        let s = self.instance_size;
        for &(x0, y0) in &self.origins {
            for y in y0..y0 + s {
                for x in x0..x0 + s {
                    cov[y * self.roi_width + x] += 1;
                }
            }
        }
        cov
    }
}

/// One extracted patch with its origin inside the parent ROI.
pub struct Instance {
    pub origin: (usize, usize),
    /// `[3, size, size]`, values scaled to [0, 1].
    pub image: Tensor<f32>,
}

pub fn extract_instances(roi: &RoiImage, grid: &InstanceGrid) -> Result<Vec<Instance>> {
    if roi.width != grid.roi_width || roi.height != grid.roi_height {
        return Err(PipelineError::Geometry(format!(
            "grid is for {}x{}, image is {}x{}",
            grid.roi_width, grid.roi_height, roi.width, roi.height
        )));
    }
    let s = grid.instance_size;
    grid.origins
        .iter()
        .map(|&(x0, y0)| {
            let mut chw = vec![0.0f32; 3 * s * s];
            for y in 0..s {
                let row = ((y0 + y) * roi.width + x0) * 3;
                for x in 0..s {
                    let px = &roi.rgb[row + x * 3..row + x * 3 + 3];
                    for c in 0..3 {
                        chw[(c * s + y) * s + x] = px[c] as f32 / 255.0;
                    }
                }
            }
            Ok(Instance {
                origin: (x0, y0),
                image: Tensor::from_vec(&[3, s, s], chw)?,
            })
        })
        .collect()
}

/// The ground-truth labels under one instance window.
pub fn extract_mask_patch(mask: &SegMask, origin: (usize, usize), size: usize) -> Vec<u8> {
    let (x0, y0) = origin;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let row = (y0 + y) * mask.width + x0;
        out.extend_from_slice(&mask.labels[row..row + size]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tile_when_roi_equals_instance() {
        let g = plan_grid(384, 384, 384, 56).unwrap();
        assert_eq!(g.origins, vec![(0, 0)]);
    }

    #[test]
    fn exact_two_by_two_at_712() {
        // stride 328; 328 + 384 = 712 exactly
        let g = plan_grid(712, 712, 384, 56).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (328, 0), (0, 328), (328, 328)]);
    }

    #[test]
    fn last_origin_snaps_at_700() {
        let g = plan_grid(700, 700, 384, 56).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (316, 0), (0, 316), (316, 316)]);
    }

    #[test]
    fn too_small_roi_is_a_geometry_error() {
        assert!(plan_grid(380, 700, 384, 56).is_err());
    }

    #[test]
    fn every_pixel_covered() {
        for (w, h) in [(384, 384), (700, 520), (712, 712), (945, 401)] {
            let g = plan_grid(w, h, 384, 56).unwrap();
            assert!(g.coverage().iter().all(|&c| c >= 1), "{}x{}", w, h);
        }
    }

    #[test]
    fn interior_overlap_bands_are_56_wide_on_aligned_sizes() {
        // 1040 = 2*328 + 384: every interior band has width exactly 56
        let g = plan_grid(1040, 1040, 384, 56).unwrap();
        let cov = g.coverage();
        let band: Vec<usize> = (0..1040)
            .filter(|&x| cov[x] > 1) // first row; >1 means overlap band
            .collect();
        assert_eq!(band.len(), 2 * 56);
    }

    #[test]
    fn patch_extraction_matches_direct_indexing() {
        let rgb: Vec<u8> = (0..(8 * 6 * 3)).map(|i| (i % 251) as u8).collect();
        let roi = RoiImage::new(8, 6, rgb).unwrap();
        let g = plan_grid(8, 6, 4, 2).unwrap();
        let instances = extract_instances(&roi, &g).unwrap();
        assert_eq!(instances.len(), g.len());
        for inst in &instances {
            let (x0, y0) = inst.origin;
            let data = inst.image.to_vec();
            for y in 0..4 {
                for x in 0..4 {
                    let want = roi.rgb[((y0 + y) * 8 + (x0 + x)) * 3 + 1] as f32 / 255.0;
                    let got = data[(1 * 4 + y) * 4 + x];
                    assert_eq!(got, want);
                }
            }
        }
    }
}
