//! Plain stochastic gradient descent.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Holds handles to the trainable tensors and applies `p -= lr * grad(p)`.
pub struct Sgd<T: Scalar> {
    params: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: Vec<(String, Tensor<T>)>) -> Self {
        Sgd { params }
    }

    pub fn params(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    /// One descent step at the given learning rate; gradients are cleared
    /// afterwards. A parameter without a gradient is an error.
    pub fn step(&self, lr: f64) -> Result<()> {
        for (name, p) in &self.params {
            let grad = p.grad().ok_or_else(|| {
                TensorError::Optimizer(format!("parameter `{}` has no gradient", name))
            })?;
            p.axpy_data(T::from_f64(-lr), &grad);
            p.zero_grad();
        }
        Ok(())
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }
}
