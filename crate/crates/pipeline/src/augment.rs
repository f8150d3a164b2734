//! Geometric training augmentation: independent horizontal/vertical flips
//! and a random 0.8-1.0 crop resized back to the instance size. The same
//! transform hits image and mask; the image is resampled bilinearly, the
//! mask by nearest neighbor so labels stay exact.

use rand::Rng;

/// A concrete draw of the augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOps {
    pub flip_h: bool,
    pub flip_v: bool,
    /// Crop window (x0, y0, side length), in input coordinates.
    pub crop: (usize, usize, usize),
}

impl AugmentOps {
    pub fn identity(size: usize) -> Self {
        AugmentOps {
            flip_h: false,
            flip_v: false,
            crop: (0, 0, size),
        }
    }
}

/// Samples flips at 50% each and the crop scale uniformly in [0.8, 1.0].
pub fn sample_ops(size: usize, rng: &mut impl Rng) -> AugmentOps {
    let flip_h = rng.gen_bool(0.5);
    let flip_v = rng.gen_bool(0.5);
    let scale: f64 = rng.gen_range(0.8..=1.0);
    let crop_size = ((size as f64 * scale).round() as usize).clamp(1, size);
    let max_off = size - crop_size;
    let x0 = if max_off == 0 { 0 } else { rng.gen_range(0..=max_off) };
    let y0 = if max_off == 0 { 0 } else { rng.gen_range(0..=max_off) };
    AugmentOps {
        flip_h,
        flip_v,
        crop: (x0, y0, crop_size),
    }
}

/// Applies `ops` to a `[3, size, size]` image buffer and its label plane.
pub fn apply(image: &[f32], mask: &[u8], size: usize, ops: AugmentOps) -> (Vec<f32>, Vec<u8>) {
    debug_assert_eq!(image.len(), 3 * size * size);
    debug_assert_eq!(mask.len(), size * size);
    let (cx, cy, cs) = ops.crop;
    debug_assert!(cx + cs <= size && cy + cs <= size && cs >= 1);

    // source coordinate after flips, in the original frame
    let src_xy = |x: usize, y: usize| {
        let fx = if ops.flip_h { size - 1 - x } else { x };
        let fy = if ops.flip_v { size - 1 - y } else { y };
        (fx, fy)
    };

    let mut out_img = vec![0.0f32; 3 * size * size];
    let mut out_mask = vec![0u8; size * size];
    let ratio = cs as f64 / size as f64;

    for oy in 0..size {
        // half-pixel mapping into the crop window
        let sy = ((oy as f64 + 0.5) * ratio - 0.5).clamp(0.0, (cs - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(cs - 1);
        let fy = sy - y0 as f64;
        let ny = (((oy as f64 + 0.5) * ratio).floor() as usize).min(cs - 1);
        for ox in 0..size {
            let sx = ((ox as f64 + 0.5) * ratio - 0.5).clamp(0.0, (cs - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(cs - 1);
            let fx = sx - x0 as f64;

            // bilinear image sample over the flipped source
            for c in 0..3 {
                let fetch = |px: usize, py: usize| {
                    let (fx_, fy_) = src_xy(cx + px, cy + py);
                    image[(c * size + fy_) * size + fx_] as f64
                };
                let v = fetch(x0, y0) * (1.0 - fy) * (1.0 - fx)
                    + fetch(x1, y0) * (1.0 - fy) * fx
                    + fetch(x0, y1) * fy * (1.0 - fx)
                    + fetch(x1, y1) * fy * fx;
                out_img[(c * size + oy) * size + ox] = v as f32;
            }

            // nearest-neighbor mask sample
            let nx = (((ox as f64 + 0.5) * ratio).floor() as usize).min(cs - 1);
            let (mx, my) = src_xy(cx + nx, cy + ny);
            out_mask[oy * size + ox] = mask[my * size + mx];
        }
    }
    (out_img, out_mask)
}

/// Samples and applies in one go (the training-loop entry point).
pub fn augment(
    image: &[f32],
    mask: &[u8],
    size: usize,
    rng: &mut impl Rng,
) -> (Vec<f32>, Vec<u8>) {
    apply(image, mask, size, sample_ops(size, rng))
}
