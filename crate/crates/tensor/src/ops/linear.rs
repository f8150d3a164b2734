use crate::error::{Result, TensorError};
use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

struct LinearBackward {
    has_bias: bool,
}

impl<T: Scalar> BackwardFn<T> for LinearBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let w = parents[1].data();
        let n = parents[0].shape()[0];
        let f_in = parents[0].shape()[1];
        let f_out = parents[1].shape()[0];

        // dX = dY · W, dW = dYᵀ · X
        let mut gx = vec![T::zero(); n * f_in];
        gemm_nn(n, f_out, f_in, grad_out, &w, &mut gx);
        let mut gw = vec![T::zero(); f_out * f_in];
        gemm_tn(f_out, n, f_in, grad_out, &x, &mut gw);

        let gb = if self.has_bias {
            let mut gb = vec![T::zero(); f_out];
            for row in grad_out.chunks_exact(f_out) {
                for (b, &g) in gb.iter_mut().zip(row) {
                    *b = *b + g;
                }
            }
            Some(gb)
        } else {
            None
        };

        let mut out = vec![Some(gx), Some(gw)];
        if self.has_bias {
            out.push(gb);
        }
        out
    }

    fn name(&self) -> &'static str {
        "linear"
    }
}

impl<T: Scalar> Tensor<T> {
    /// Affine map `[N, F_in] -> [N, F_out]` with weight `[F_out, F_in]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        if self.rank() != 2 || weight.rank() != 2 {
            return Err(TensorError::dim(
                "linear",
                format!(
                    "input must be [N,F_in] and weight [F_out,F_in], got {:?} / {:?}",
                    self.shape(),
                    weight.shape()
                ),
            ));
        }
        let (n, f_in) = (self.shape()[0], self.shape()[1]);
        let (f_out, wf_in) = (weight.shape()[0], weight.shape()[1]);
        if f_in != wf_in {
            return Err(TensorError::dim(
                "linear",
                format!("input features {} vs weight features {}", f_in, wf_in),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [f_out] {
                return Err(TensorError::dim(
                    "linear",
                    format!("bias shape {:?}, expected [{}]", b.shape(), f_out),
                ));
            }
        }

        let mut out = vec![T::zero(); n * f_out];
        // Y = X · Wᵀ
        gemm_nt(n, f_in, f_out, &self.data(), &weight.data(), &mut out);
        if let Some(b) = bias {
            let bd = b.data();
            for row in out.chunks_exact_mut(f_out) {
                for (v, &bv) in row.iter_mut().zip(bd.iter()) {
                    *v = *v + bv;
                }
            }
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            vec![n, f_out],
            out,
            parents,
            Box::new(LinearBackward {
                has_bias: bias.is_some(),
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_through() {
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = Tensor::from_vec(&[3, 3], eye).unwrap();
        let b = Tensor::zeros(&[3]);
        let y = x.linear(&w, Some(&b)).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn all_ones_weight_row_sums() {
        let x = Tensor::<f64>::from_vec(&[2, 4], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        let w = Tensor::full(&[1, 4], 1.0);
        let y = x.linear(&w, None).unwrap();
        assert_eq!(y.to_vec(), vec![10.0, 26.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut state = 0xabcdu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let (n, f_in, f_out) = (2, 5, 3);
        let x: Vec<f64> = (0..n * f_in).map(|_| next()).collect();
        let w: Vec<f64> = (0..f_out * f_in).map(|_| next()).collect();
        let b: Vec<f64> = (0..f_out).map(|_| next()).collect();

        let mut want = vec![0.0; n * f_out];
        for i in 0..n {
            for o in 0..f_out {
                let mut acc = b[o];
                for j in 0..f_in {
                    acc += x[i * f_in + j] * w[o * f_in + j];
                }
                want[i * f_out + o] = acc;
            }
        }

        let xt = Tensor::from_vec(&[n, f_in], x).unwrap();
        let wt = Tensor::from_vec(&[f_out, f_in], w).unwrap();
        let bt = Tensor::from_vec(&[f_out], b).unwrap();
        let got = xt.linear(&wt, Some(&bt)).unwrap();
        for (a, e) in got.to_vec().iter().zip(&want) {
            assert!((a - e).abs() <= 1e-6);
        }
    }

    #[test]
    fn feature_mismatch_errors() {
        let x = Tensor::<f32>::zeros(&[1, 4]);
        let w = Tensor::<f32>::zeros(&[2, 5]);
        assert!(x.linear(&w, None).is_err());
    }
}
