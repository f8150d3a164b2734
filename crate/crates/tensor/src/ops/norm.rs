use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

/// Whether batch statistics are computed fresh (training) or read from the
/// running estimates (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running mean/variance estimates. Updated in place during training
/// forwards; gradients never flow into them.
#[derive(Debug)]
pub struct BnStats<T: Scalar> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> BnStats<T> {
    pub fn new(channels: usize) -> Self {
        BnStats {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], T::one()),
        }
    }
}

/// Channel axis and per-channel element count for the supported layouts.
fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        // [C, H, W]: single instance
        3 => Ok((shape[0], shape[1] * shape[2], 1)),
        // [N, C, H, W]
        4 => Ok((shape[1], shape[2] * shape[3], shape[0])),
        _ => Err(TensorError::dim(
            "batch_norm",
            format!("expected [C,H,W] or [N,C,H,W], got {:?}", shape),
        )),
    }
}

/// Iterate input as (channel, value-index) runs: for each batch item, each
/// channel occupies one contiguous run of `spatial` values.
fn for_each_channel_run(
    channels: usize,
    spatial: usize,
    batch: usize,
    mut f: impl FnMut(usize, usize),
) {
    for n in 0..batch {
        for c in 0..channels {
            f(c, (n * channels + c) * spatial);
        }
    }
}

struct BnBackward<T: Scalar> {
    mode: BnMode,
    mean: Vec<T>,
    inv_std: Vec<T>,
    spatial: usize,
    batch: usize,
}

impl<T: Scalar> BackwardFn<T> for BnBackward<T> {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let gamma = parents[1].data();
        let channels = gamma.len();
        let m = T::from_f64((self.spatial * self.batch) as f64);

        let mut sum_g = vec![T::zero(); channels];
        let mut sum_gx = vec![T::zero(); channels];
        for_each_channel_run(channels, self.spatial, self.batch, |c, base| {
            let mut sg = T::zero();
            let mut sgx = T::zero();
            for i in 0..self.spatial {
                let g = grad_out[base + i];
                let xh = (x[base + i] - self.mean[c]) * self.inv_std[c];
                sg = sg + g;
                sgx = sgx + g * xh;
            }
            sum_g[c] = sum_g[c] + sg;
            sum_gx[c] = sum_gx[c] + sgx;
        });

        let mut grad_x = vec![T::zero(); x.len()];
        for_each_channel_run(channels, self.spatial, self.batch, |c, base| {
            let scale = gamma[c] * self.inv_std[c];
            match self.mode {
                BnMode::Train => {
                    let mean_g = sum_g[c] / m;
                    let mean_gx = sum_gx[c] / m;
                    for i in 0..self.spatial {
                        let xh = (x[base + i] - self.mean[c]) * self.inv_std[c];
                        grad_x[base + i] = scale * (grad_out[base + i] - mean_g - xh * mean_gx);
                    }
                }
                BnMode::Eval => {
                    // Running statistics are constants here.
                    for i in 0..self.spatial {
                        grad_x[base + i] = scale * grad_out[base + i];
                    }
                }
            }
        });

        vec![Some(grad_x), Some(sum_gx), Some(sum_g)]
    }

    fn name(&self) -> &'static str {
        "batch_norm"
    }
}

impl<T: Scalar> Tensor<T> {
    /// Batch normalization over `[C,H,W]` (instance) or `[N,C,H,W]` input.
    ///
    /// Training mode normalizes by the batch statistics and folds them into
    /// `stats` with the given momentum; eval mode normalizes by `stats`.
    pub fn batch_norm(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        stats: &BnStats<T>,
        mode: BnMode,
        eps: f64,
        momentum: f64,
    ) -> Result<Tensor<T>> {
        if eps <= 0.0 {
            return Err(TensorError::config("batch_norm", "eps must be positive"));
        }
        let (channels, spatial, batch) = layout(self.shape())?;
        if gamma.shape() != [channels] || beta.shape() != [channels] {
            return Err(TensorError::dim(
                "batch_norm",
                format!(
                    "gamma/beta must be [{}], got {:?}/{:?}",
                    channels,
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        if stats.mean.len() != channels || stats.var.len() != channels {
            return Err(TensorError::dim(
                "batch_norm",
                format!("running stats must have {} channels", channels),
            ));
        }

        let eps_t = T::from_f64(eps);
        let x = self.data();
        let m = spatial * batch;
        let m_t = T::from_f64(m as f64);

        let (mean, var) = match mode {
            BnMode::Train => {
                let mut mean = vec![T::zero(); channels];
                let mut var = vec![T::zero(); channels];
                for_each_channel_run(channels, spatial, batch, |c, base| {
                    mean[c] = mean[c] + x[base..base + spatial].iter().copied().sum();
                });
                for mc in &mut mean {
                    *mc = *mc / m_t;
                }
                for_each_channel_run(channels, spatial, batch, |c, base| {
                    let mut acc = T::zero();
                    for &v in &x[base..base + spatial] {
                        let d = v - mean[c];
                        acc = acc + d * d;
                    }
                    var[c] = var[c] + acc;
                });
                for vc in &mut var {
                    *vc = *vc / m_t;
                }

                // Fold into the running estimates (unbiased variance).
                let mom = T::from_f64(momentum);
                let keep = T::one() - mom;
                let bessel = if m > 1 {
                    T::from_f64(m as f64 / (m as f64 - 1.0))
                } else {
                    T::one()
                };
                let mut rm = stats.mean.to_vec();
                let mut rv = stats.var.to_vec();
                for c in 0..channels {
                    rm[c] = keep * rm[c] + mom * mean[c];
                    rv[c] = keep * rv[c] + mom * var[c] * bessel;
                }
                stats.mean.set_data(&rm)?;
                stats.var.set_data(&rv)?;
                (mean, var)
            }
            BnMode::Eval => (stats.mean.to_vec(), stats.var.to_vec()),
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
        let g = gamma.data();
        let b = beta.data();
        let mut out = vec![T::zero(); x.len()];
        for_each_channel_run(channels, spatial, batch, |c, base| {
            for i in 0..spatial {
                let xh = (x[base + i] - mean[c]) * inv_std[c];
                out[base + i] = g[c] * xh + b[c];
            }
        });
        drop(x);
        drop(g);
        drop(b);

        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(BnBackward {
                mode,
                mean,
                inv_std,
                spatial,
                batch,
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_affine(c: usize) -> (Tensor<f64>, Tensor<f64>, BnStats<f64>) {
        (
            Tensor::full(&[c], 1.0),
            Tensor::zeros(&[c]),
            BnStats::new(c),
        )
    }

    #[test]
    fn normalized_input_is_nearly_unchanged() {
        // Per-channel mean 0, variance 1 already.
        let x = Tensor::<f64>::from_vec(&[1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let (g, b, st) = unit_affine(1);
        let y = x.batch_norm(&g, &b, &st, BnMode::Train, 1e-5, 0.1).unwrap();
        for (a, e) in y.to_vec().iter().zip([-1.0, 1.0]) {
            assert!((a - e).abs() < 1e-4); // eps shrinks values slightly
        }
    }

    #[test]
    fn zero_gamma_pins_output_to_beta() {
        let x = Tensor::<f64>::from_vec(&[2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let gamma = Tensor::zeros(&[2]);
        let beta = Tensor::full(&[2], 5.0);
        let st = BnStats::new(2);
        let y = x
            .batch_norm(&gamma, &beta, &st, BnMode::Train, 1e-5, 0.1)
            .unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn train_mode_statistics_oracle() {
        // Random-ish 2x3x4x4 batch: outputs must have ~0 mean, ~1 variance.
        let mut state = 0x9e3779b9u64;
        let data: Vec<f64> = (0..2 * 3 * 4 * 4)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64 / (1u64 << 31) as f64) * 3.0 - 1.5
            })
            .collect();
        let x = Tensor::<f64>::from_vec(&[2, 3, 4, 4], data).unwrap();
        let (g, b, st) = unit_affine(3);
        let y = x.batch_norm(&g, &b, &st, BnMode::Train, 1e-5, 0.1).unwrap();

        let out = y.to_vec();
        let m = 2 * 4 * 4;
        for c in 0..3 {
            let mut vals = Vec::with_capacity(m);
            for n in 0..2 {
                let base = (n * 3 + c) * 16;
                vals.extend_from_slice(&out[base..base + 16]);
            }
            let mean: f64 = vals.iter().sum::<f64>() / m as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            assert!(mean.abs() <= 1e-6, "channel {} mean {}", c, mean);
            assert!((var - 1.0).abs() <= 1e-4, "channel {} var {}", c, var);
        }
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2], vec![4.0, 8.0]).unwrap();
        let (g, b, st) = unit_affine(1);
        st.mean.set_data(&[6.0]).unwrap();
        st.var.set_data(&[4.0]).unwrap();
        let y = x.batch_norm(&g, &b, &st, BnMode::Eval, 1e-12, 0.1).unwrap();
        let out = y.to_vec();
        assert!((out[0] + 1.0).abs() < 1e-5);
        assert!((out[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::<f32>::zeros(&[3, 2, 2]);
        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let st = BnStats::new(2);
        assert!(x.batch_norm(&g, &b, &st, BnMode::Train, 1e-5, 0.1).is_err());
    }
}
