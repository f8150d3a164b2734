use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

/// Source taps and weights for one output coordinate under half-pixel-center
/// mapping with edge clamping: `src = (dst + 0.5) * in/out - 0.5`.
fn taps(dst: usize, in_extent: usize, out_extent: usize) -> (usize, usize, f64) {
    let src = (dst as f64 + 0.5) * in_extent as f64 / out_extent as f64 - 0.5;
    let src = src.clamp(0.0, (in_extent - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_extent - 1);
    (lo, hi, src - lo as f64)
}

struct BilinearBackward {
    out_h: usize,
    out_w: usize,
}

impl<T: Scalar> BackwardFn<T> for BilinearBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let shape = parents[0].shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let mut grad = vec![T::zero(); c * h * w];
        for oy in 0..self.out_h {
            let (y0, y1, fy) = taps(oy, h, self.out_h);
            let wy0 = T::from_f64(1.0 - fy);
            let wy1 = T::from_f64(fy);
            for ox in 0..self.out_w {
                let (x0, x1, fx) = taps(ox, w, self.out_w);
                let wx0 = T::from_f64(1.0 - fx);
                let wx1 = T::from_f64(fx);
                for ci in 0..c {
                    let g = grad_out[(ci * self.out_h + oy) * self.out_w + ox];
                    let plane = ci * h * w;
                    grad[plane + y0 * w + x0] = grad[plane + y0 * w + x0] + g * wy0 * wx0;
                    grad[plane + y0 * w + x1] = grad[plane + y0 * w + x1] + g * wy0 * wx1;
                    grad[plane + y1 * w + x0] = grad[plane + y1 * w + x0] + g * wy1 * wx0;
                    grad[plane + y1 * w + x1] = grad[plane + y1 * w + x1] + g * wy1 * wx1;
                }
            }
        }
        vec![Some(grad)]
    }

    fn name(&self) -> &'static str {
        "bilinear"
    }
}

impl<T: Scalar> Tensor<T> {
    /// Bilinear resampling of a `[C,H,W]` input to an arbitrary target size,
    /// half-pixel centers with edge clamping.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        if self.rank() != 3 {
            return Err(TensorError::dim(
                "bilinear",
                format!("input must be [C,H,W], got {:?}", self.shape()),
            ));
        }
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::config("bilinear", "output dims must be positive"));
        }
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let x = self.data();
        let mut out = vec![T::zero(); c * out_h * out_w];
        for oy in 0..out_h {
            let (y0, y1, fy) = taps(oy, h, out_h);
            let wy0 = T::from_f64(1.0 - fy);
            let wy1 = T::from_f64(fy);
            for ox in 0..out_w {
                let (x0, x1, fx) = taps(ox, w, out_w);
                let wx0 = T::from_f64(1.0 - fx);
                let wx1 = T::from_f64(fx);
                for ci in 0..c {
                    let plane = ci * h * w;
                    let v = x[plane + y0 * w + x0] * wy0 * wx0
                        + x[plane + y0 * w + x1] * wy0 * wx1
                        + x[plane + y1 * w + x0] * wy1 * wx0
                        + x[plane + y1 * w + x1] * wy1 * wx1;
                    out[(ci * out_h + oy) * out_w + ox] = v;
                }
            }
        }
        drop(x);

        Ok(Tensor::from_op(
            vec![c, out_h, out_w],
            out,
            vec![self.clone()],
            Box::new(BilinearBackward { out_h, out_w }),
        ))
    }

    /// Integer-factor bilinear upsampling (the decoder's `x2` steps).
    pub fn bilinear_upsample(&self, factor: usize) -> Result<Tensor<T>> {
        if factor < 2 {
            return Err(TensorError::config(
                "bilinear_upsample",
                format!("factor must be >= 2, got {}", factor),
            ));
        }
        if self.rank() != 3 {
            return Err(TensorError::dim(
                "bilinear_upsample",
                format!("input must be [C,H,W], got {:?}", self.shape()),
            ));
        }
        self.resize_bilinear(self.shape()[1] * factor, self.shape()[2] * factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_preserved() {
        let x = Tensor::<f64>::full(&[2, 3, 3], 5.0);
        let y = x.bilinear_upsample(2).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        assert!(y.to_vec().iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn half_pixel_mapping_on_a_pair() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = x.bilinear_upsample(2).unwrap();
        let got = y.to_vec();
        let want = [0.0, 0.25, 0.75, 1.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{:?}", got);
        }
    }

    #[test]
    fn output_range_stays_within_input_range() {
        let data: Vec<f64> = (0..24).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x = Tensor::<f64>::from_vec(&[2, 3, 4], data).unwrap();
        let y = x.bilinear_upsample(3).unwrap();
        for v in y.to_vec() {
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn factor_below_two_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]);
        assert!(x.bilinear_upsample(1).is_err());
    }

    #[test]
    fn same_size_resize_is_identity() {
        let data: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let x = Tensor::<f64>::from_vec(&[1, 3, 4], data.clone()).unwrap();
        let y = x.resize_bilinear(3, 4).unwrap();
        assert_eq!(y.to_vec(), data);
    }
}
