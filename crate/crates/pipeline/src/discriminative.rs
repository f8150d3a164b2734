//! Instance selection by classification confidence, the threshold search,
//! and fusion of the selection with the segmentation mask.

use crate::error::{PipelineError, Result};
use crate::roi::{DiscriminativeMask, SegMask};
use crate::tiling::InstanceGrid;

/// An instance is discriminative when its maximum class probability strictly
/// exceeds `tau`. `zbar` must be a probability vector (sum 1 within 1e-4).
pub fn select_discriminative(zbar: &[f32], tau: f64) -> Result<bool> {
    if zbar.is_empty() {
        return Err(PipelineError::Input("empty probability vector".into()));
    }
    let sum: f64 = zbar.iter().map(|&v| v as f64).sum();
    if (sum - 1.0).abs() > 1e-4 || zbar.iter().any(|&v| v < 0.0) {
        return Err(PipelineError::Input(format!(
            "probabilities must be normalized (sum {sum:.6})"
        )));
    }
    let max = zbar.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    Ok(max as f64 > tau)
}

/// The candidate thresholds: 0.25, 0.30, ..., 0.95.
pub fn tau_grid() -> Vec<f64> {
    (5..=19).map(|i| i as f64 * 0.05).collect()
}

/// Picks the candidate with the best downstream accuracy; ties go to the
/// smallest threshold (keeps more evidence).
pub fn choose_tau(scored: &[(f64, f64)]) -> Result<f64> {
    if scored.is_empty() {
        return Err(PipelineError::Input(
            "no candidate thresholds were scored".into(),
        ));
    }
    let mut best = scored[0];
    for &(tau, acc) in &scored[1..] {
        if acc > best.1 || (acc == best.1 && tau < best.0) {
            best = (tau, acc);
        }
    }
    Ok(best.0)
}

/// Per-instance confidences and selection flags over one ROI, plus the
/// broadcast per-pixel binary map.
#[derive(Debug, Clone)]
pub struct DiscriminativeMap {
    pub confidences: Vec<f32>,
    pub selected: Vec<bool>,
}

impl DiscriminativeMap {
    /// Applies the threshold to per-instance class-probability vectors.
    pub fn from_probabilities(zbars: &[Vec<f32>], tau: f64) -> Result<Self> {
        let mut confidences = Vec::with_capacity(zbars.len());
        let mut selected = Vec::with_capacity(zbars.len());
        for z in zbars {
            selected.push(select_discriminative(z, tau)?);
            confidences.push(z.iter().cloned().fold(f32::NEG_INFINITY, f32::max));
        }
        Ok(DiscriminativeMap {
            confidences,
            selected,
        })
    }

    /// Pixel is true iff at least one covering instance is discriminative.
    pub fn binary_map(&self, grid: &InstanceGrid) -> Result<Vec<bool>> {
        if self.selected.len() != grid.origins.len() {
            return Err(PipelineError::Geometry(format!(
                "{} selection flags for {} instances",
                self.selected.len(),
                grid.origins.len()
            )));
        }
        let mut map = vec![false; grid.roi_width * grid.roi_height];
        let s = grid.instance_size;
        for (&(x0, y0), &sel) in grid.origins.iter().zip(&self.selected) {
            if !sel {
                continue;
            }
            for y in y0..y0 + s {
                map[y * grid.roi_width + x0..y * grid.roi_width + x0 + s].fill(true);
            }
        }
        Ok(map)
    }
}

/// Restricts the tissue mask to discriminative coverage. When nothing is
/// discriminative the full mask is kept and flagged as a fallback, so the
/// downstream feature extraction always has pixels to count.
pub fn fuse_discriminative_mask(
    seg: &SegMask,
    map: &DiscriminativeMap,
    grid: &InstanceGrid,
) -> Result<DiscriminativeMask> {
    if seg.width != grid.roi_width || seg.height != grid.roi_height {
        return Err(PipelineError::Geometry(format!(
            "mask {}x{} does not match grid {}x{}",
            seg.width, seg.height, grid.roi_width, grid.roi_height
        )));
    }
    let valid = map.binary_map(grid)?;
    let fallback = !valid.iter().any(|&v| v);
    let valid = if fallback { vec![true; valid.len()] } else { valid };
    Ok(DiscriminativeMask {
        width: seg.width,
        height: seg.height,
        labels: seg.labels.clone(),
        valid,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::plan_grid;

    #[test]
    fn selection_examples() {
        assert!(select_discriminative(&[0.1, 0.2, 0.3, 0.4], 0.35).unwrap());
        // strict inequality at the boundary
        assert!(!select_discriminative(&[0.25, 0.25, 0.25, 0.25], 0.25).unwrap());
        assert!(select_discriminative(&[0.7, 0.1, 0.1, 0.1], 0.5).unwrap());
    }

    #[test]
    fn unnormalized_input_is_rejected()  {
        assert!(select_discriminative(&[0.5, 0.6], 0.5).is_err());
        assert!(select_discriminative(&[0.5, 0.4999], 0.5).is_ok());
    }

    #[test]
    fn tau_grid_is_the_documented_lattice() {
        let g = tau_grid();
        assert_eq!(g.len(), 15);
        assert!((g[0] - 0.25).abs() < 1e-12);
        assert!((g[14] - 0.95).abs() < 1e-12);
        assert!((g[1] - g[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn choose_tau_takes_argmax_then_smallest() {
        assert_eq!(choose_tau(&[(0.3, 0.60), (0.5, 0.70)]).unwrap(), 0.5);
        let all_equal: Vec<(f64, f64)> = tau_grid().into_iter().map(|t| (t, 0.5)).collect();
        assert_eq!(choose_tau(&all_equal).unwrap(), 0.25);
        assert!(choose_tau(&[]).is_err());
    }

    #[test]
    fn raising_tau_shrinks_the_selected_set() {
        let zbars: Vec<Vec<f32>> = vec![
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.7, 0.1, 0.1, 0.1],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.9, 0.05, 0.03, 0.02],
        ];
        let mut prev: Option<Vec<bool>> = None;
        for tau in tau_grid() {
            let m = DiscriminativeMap::from_probabilities(&zbars, tau).unwrap();
            if let Some(p) = &prev {
                for (now, before) in m.selected.iter().zip(p) {
                    assert!(!now || *before, "selection grew as tau rose");
                }
            }
            prev = Some(m.selected);
        }
    }

    #[test]
    fn fuse_keeps_labels_and_flags_fallback() {
        let grid = plan_grid(8, 4, 4, 0).unwrap();
        let seg = SegMask::new(8, 4, (0..32).map(|i| (i % 8) as u8).collect()).unwrap();

        let all = DiscriminativeMap {
            confidences: vec![0.9, 0.9],
            selected: vec![true, true],
        };
        let fused = fuse_discriminative_mask(&seg, &all, &grid).unwrap();
        assert!(!fused.fallback);
        assert_eq!(fused.valid_pixel_count(), 32);
        assert_eq!(fused.labels, seg.labels);

        let none = DiscriminativeMap {
            confidences: vec![0.3, 0.3],
            selected: vec![false, false],
        };
        let fused = fuse_discriminative_mask(&seg, &none, &grid).unwrap();
        assert!(fused.fallback);
        assert_eq!(fused.valid_pixel_count(), 32);

        let half = DiscriminativeMap {
            confidences: vec![0.9, 0.3],
            selected: vec![true, false],
        };
        let fused = fuse_discriminative_mask(&seg, &half, &grid).unwrap();
        assert!(!fused.fallback);
        // left 4x4 tile only
        assert_eq!(fused.valid_pixel_count(), 16);
        for y in 0..4 {
            for x in 0..4 {
                assert!(fused.valid[y * 8 + x]);
                assert!(!fused.valid[y * 8 + x + 4]);
            }
        }
    }
}
