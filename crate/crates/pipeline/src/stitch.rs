//! Recombining per-instance predictions into an ROI-level mask.

use crate::error::{PipelineError, Result};
use crate::roi::{SegMask, TISSUE_CLASSES};
use crate::tiling::InstanceGrid;

/// Averages per-pixel class probabilities over all covering instances, then
/// takes the argmax (ties go to the lowest label).
///
/// `probs[i]` is instance `i`'s `[classes, size, size]` probability tensor,
/// flattened row-major, aligned with `grid.origins`.
pub fn stitch_seg(grid: &InstanceGrid, probs: &[Vec<f32>], classes: usize) -> Result<SegMask> {
    if probs.len() != grid.origins.len() {
        return Err(PipelineError::Geometry(format!(
            "{} probability maps for {} grid origins",
            probs.len(),
            grid.origins.len()
        )));
    }
    if classes > TISSUE_CLASSES {
        return Err(PipelineError::Input(format!(
            "{} classes exceed the {}-label mask encoding",
            classes, TISSUE_CLASSES
        )));
    }
    let s = grid.instance_size;
    let plane = s * s;
    for (i, p) in probs.iter().enumerate() {
        if p.len() != classes * plane {
            return Err(PipelineError::Geometry(format!(
                "probability map {} has {} values, expected {}",
                i,
                p.len(),
                classes * plane
            )));
        }
    }

    let (w, h) = (grid.roi_width, grid.roi_height);
    let mut acc = vec![0.0f32; classes * w * h];
    let mut cover = vec![0u32; w * h];

    for (&(x0, y0), p) in grid.origins.iter().zip(probs) {
        for y in 0..s {
            let gy = y0 + y;
            for x in 0..s {
                let gx = x0 + x;
                cover[gy * w + gx] += 1;
                for c in 0..classes {
                    acc[(c * h + gy) * w + gx] += p[c * plane + y * s + x];
                }
            }
        }
    }

    let mut labels = vec![0u8; w * h];
    for (idx, &n) in cover.iter().enumerate() {
        if n == 0 {
            // unreachable under the grid coverage invariant
            return Err(PipelineError::Geometry(format!(
                "pixel {} uncovered by any instance",
                idx
            )));
        }
        let (gy, gx) = (idx / w, idx % w);
        let mut best = 0usize;
        let mut best_v = f32::NEG_INFINITY;
        for c in 0..classes {
            let v = acc[(c * h + gy) * w + gx] / n as f32;
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        labels[idx] = best as u8;
    }
    SegMask::new(w, h, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::plan_grid;

    fn uniform_but(classes: usize, plane: usize, class: usize, p: f32) -> Vec<f32> {
        let rest = (1.0 - p) / (classes - 1) as f32;
        let mut v = vec![rest; classes * plane];
        v[class * plane..(class + 1) * plane].fill(p);
        v
    }

    #[test]
    fn non_overlapping_grid_is_verbatim_argmax() {
        let g = plan_grid(8, 4, 4, 0).unwrap();
        assert_eq!(g.origins.len(), 2);
        let p0 = uniform_but(3, 16, 1, 0.8);
        let p1 = uniform_but(3, 16, 2, 0.9);
        let mask = stitch_seg(&g, &[p0, p1], 3).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(mask.label_at(x, y), 1);
                assert_eq!(mask.label_at(x + 4, y), 2);
            }
        }
    }

    #[test]
    fn overlap_blend_follows_the_average() {
        // Two 4px tiles over a 6px row overlap in columns 2..4.
        let g = plan_grid(6, 4, 4, 2).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (2, 0)]);
        // class 0 prob 0.6 in tile A, 0.2 in tile B; remainder uniform over 3 others
        let pa = uniform_but(4, 16, 0, 0.6);
        let pb = uniform_but(4, 16, 0, 0.2);
        let mask = stitch_seg(&g, &[pa, pb], 4).unwrap();
        // overlap average for class 0: 0.4 vs others (0.1333+0.2667)/2 = 0.2
        for x in 2..4 {
            assert_eq!(mask.label_at(x, 0), 0);
        }
        // tile B exclusive region: class 0 at 0.2 vs others at 0.2667
        assert_ne!(mask.label_at(5, 0), 0);
    }

    #[test]
    fn constant_fields_stitch_constant() {
        let g = plan_grid(700, 700, 384, 56).unwrap();
        let p = uniform_but(8, 384 * 384, 5, 0.5);
        let probs: Vec<Vec<f32>> = (0..g.len()).map(|_| p.clone()).collect();
        let mask = stitch_seg(&g, &probs, 8).unwrap();
        assert!(mask.labels.iter().all(|&l| l == 5));
    }

    #[test]
    fn ties_resolve_to_lowest_label() {
        let g = plan_grid(4, 4, 4, 0).unwrap();
        let p = vec![0.25f32; 4 * 16];
        let mask = stitch_seg(&g, &[p], 4).unwrap();
        assert!(mask.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let g = plan_grid(4, 4, 4, 0).unwrap();
        assert!(stitch_seg(&g, &[], 4).is_err());
    }
}
