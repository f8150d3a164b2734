use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

struct ConcatBackward {
    axis: usize,
    sizes: Vec<usize>,
}

impl<T: Scalar> BackwardFn<T> for ConcatBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let out_shape = {
            let mut s = parents[0].shape().to_vec();
            s[self.axis] = self.sizes.iter().sum();
            s
        };
        let outer: usize = out_shape[..self.axis].iter().product();
        let inner: usize = out_shape[self.axis + 1..].iter().product();
        let total_axis: usize = self.sizes.iter().sum();

        let mut grads: Vec<Vec<T>> = parents
            .iter()
            .map(|p| vec![T::zero(); p.len()])
            .collect();
        for o in 0..outer {
            let mut offset = 0usize;
            for (pi, &sz) in self.sizes.iter().enumerate() {
                for a in 0..sz {
                    let src = (o * total_axis + offset + a) * inner;
                    let dst = (o * sz + a) * inner;
                    grads[pi][dst..dst + inner].copy_from_slice(&grad_out[src..src + inner]);
                }
                offset += sz;
            }
        }
        grads.into_iter().map(Some).collect()
    }

    fn name(&self) -> &'static str {
        "concat"
    }
}

struct ReshapeBackward {
    src_shape: Vec<usize>,
}

impl<T: Scalar> BackwardFn<T> for ReshapeBackward {
    fn apply(&self, grad_out: &[T], _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        debug_assert_eq!(grad_out.len(), self.src_shape.iter().product::<usize>());
        vec![Some(grad_out.to_vec())]
    }

    fn name(&self) -> &'static str {
        "reshape"
    }
}

impl<T: Scalar> Tensor<T> {
    /// Concatenate along `axis`; all other extents must match.
    pub fn concat(tensors: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if tensors.is_empty() {
            return Err(TensorError::config("concat", "empty tensor list"));
        }
        let rank = tensors[0].rank();
        if axis >= rank {
            return Err(TensorError::dim(
                "concat",
                format!("axis {} out of range for rank {}", axis, rank),
            ));
        }
        for t in tensors {
            if t.rank() != rank {
                return Err(TensorError::dim("concat", "rank mismatch"));
            }
            for d in 0..rank {
                if d != axis && t.shape()[d] != tensors[0].shape()[d] {
                    return Err(TensorError::dim(
                        "concat",
                        format!(
                            "shape {:?} incompatible with {:?} along axis {}",
                            t.shape(),
                            tensors[0].shape(),
                            axis
                        ),
                    ));
                }
            }
        }

        let sizes: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total_axis: usize = sizes.iter().sum();
        let mut out_shape = tensors[0].shape().to_vec();
        out_shape[axis] = total_axis;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();

        let mut out = vec![T::zero(); outer * total_axis * inner];
        for o in 0..outer {
            let mut offset = 0usize;
            for (t, &sz) in tensors.iter().zip(&sizes) {
                let data = t.data();
                for a in 0..sz {
                    let dst = (o * total_axis + offset + a) * inner;
                    let src = (o * sz + a) * inner;
                    out[dst..dst + inner].copy_from_slice(&data[src..src + inner]);
                }
                offset += sz;
            }
        }

        let parents: Vec<Tensor<T>> = tensors.iter().map(|t| (*t).clone()).collect();
        Ok(Tensor::from_op(
            out_shape,
            out,
            parents,
            Box::new(ConcatBackward { axis, sizes }),
        ))
    }

    /// Same data, new shape (element counts must agree).
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(TensorError::dim(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), shape),
            ));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(ReshapeBackward {
                src_shape: self.shape().to_vec(),
            }),
        ))
    }
}
