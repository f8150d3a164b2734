use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

/// Bin `i` of `out` cells over an extent of `n` covers
/// `[floor(i*n/out), floor((i+1)*n/out))`.
#[inline]
fn bin_bounds(i: usize, n: usize, out: usize) -> (usize, usize) {
    (i * n / out, (i + 1) * n / out)
}

struct AdaptiveAvgPoolBackward {
    out_h: usize,
    out_w: usize,
}

impl<T: Scalar> BackwardFn<T> for AdaptiveAvgPoolBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let shape = parents[0].shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let mut grad = vec![T::zero(); c * h * w];
        for ci in 0..c {
            for oy in 0..self.out_h {
                let (y0, y1) = bin_bounds(oy, h, self.out_h);
                for ox in 0..self.out_w {
                    let (x0, x1) = bin_bounds(ox, w, self.out_w);
                    let count = T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                    let g = grad_out[(ci * self.out_h + oy) * self.out_w + ox] / count;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let idx = (ci * h + y) * w + x;
                            grad[idx] = grad[idx] + g;
                        }
                    }
                }
            }
        }
        vec![Some(grad)]
    }

    fn name(&self) -> &'static str {
        "adaptive_avg_pool"
    }
}

impl<T: Scalar> Tensor<T> {
    /// Average pooling of a `[C,H,W]` input onto an `out_h x out_w` grid with
    /// adaptively sized bins.
    pub fn adaptive_avg_pool(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        if self.rank() != 3 {
            return Err(TensorError::dim(
                "adaptive_avg_pool",
                format!("input must be [C,H,W], got {:?}", self.shape()),
            ));
        }
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::config(
                "adaptive_avg_pool",
                "output dims must be positive",
            ));
        }
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        if out_h > h || out_w > w {
            return Err(TensorError::config(
                "adaptive_avg_pool",
                format!("output {}x{} exceeds input {}x{}", out_h, out_w, h, w),
            ));
        }

        let x = self.data();
        let mut out = vec![T::zero(); c * out_h * out_w];
        for ci in 0..c {
            for oy in 0..out_h {
                let (y0, y1) = bin_bounds(oy, h, out_h);
                for ox in 0..out_w {
                    let (x0, x1) = bin_bounds(ox, w, out_w);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            acc = acc + x[(ci * h + y) * w + xx];
                        }
                    }
                    let count = T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                    out[(ci * out_h + oy) * out_w + ox] = acc / count;
                }
            }
        }
        drop(x);

        Ok(Tensor::from_op(
            vec![c, out_h, out_w],
            out,
            vec![self.clone()],
            Box::new(AdaptiveAvgPoolBackward { out_h, out_w }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_pool_is_per_channel_mean() {
        let mut data = Vec::new();
        for c in 0..3 {
            data.extend((0..144).map(|i| (c * 144 + i) as f64));
        }
        let x = Tensor::<f64>::from_vec(&[3, 12, 12], data.clone()).unwrap();
        let y = x.adaptive_avg_pool(1, 1).unwrap();
        assert_eq!(y.shape(), &[3, 1, 1]);
        for c in 0..3 {
            let mean: f64 = data[c * 144..(c + 1) * 144].iter().sum::<f64>() / 144.0;
            assert!((y.to_vec()[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_bin_means() {
        // Pixel value = row index; bins {0,1} and {2,3} average to 0.5 / 2.5.
        let data: Vec<f64> = (0..16).map(|i| (i / 4) as f64).collect();
        let x = Tensor::<f64>::from_vec(&[1, 4, 4], data).unwrap();
        let y = x.adaptive_avg_pool(2, 2).unwrap();
        assert_eq!(y.to_vec(), vec![0.5, 0.5, 2.5, 2.5]);
    }

    #[test]
    fn same_size_output_is_identity() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        let x = Tensor::<f64>::from_vec(&[1, 3, 4], data.clone()).unwrap();
        let y = x.adaptive_avg_pool(3, 4).unwrap();
        assert_eq!(y.to_vec(), data);
    }

    #[test]
    fn zero_output_dims_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 4, 4]);
        assert!(x.adaptive_avg_pool(0, 2).is_err());
    }
}
