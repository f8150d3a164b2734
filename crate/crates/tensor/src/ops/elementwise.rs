use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

struct ReluBackward;

impl<T: Scalar> BackwardFn<T> for ReluBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let g = grad_out
            .iter()
            .zip(x.iter())
            .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
            .collect();
        vec![Some(g)]
    }

    fn name(&self) -> &'static str {
        "relu"
    }
}

struct AddBackward;

impl<T: Scalar> BackwardFn<T> for AddBackward {
    fn apply(&self, grad_out: &[T], _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad_out.to_vec()), Some(grad_out.to_vec())]
    }

    fn name(&self) -> &'static str {
        "add"
    }
}

struct MulBackward;

impl<T: Scalar> BackwardFn<T> for MulBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let a = parents[0].data();
        let b = parents[1].data();
        let ga = grad_out.iter().zip(b.iter()).map(|(&g, &b)| g * b).collect();
        let gb = grad_out.iter().zip(a.iter()).map(|(&g, &a)| g * a).collect();
        vec![Some(ga), Some(gb)]
    }

    fn name(&self) -> &'static str {
        "mul"
    }
}

struct ScaleBackward<T>(T);

impl<T: Scalar> BackwardFn<T> for ScaleBackward<T> {
    fn apply(&self, grad_out: &[T], _parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad_out.iter().map(|&g| g * self.0).collect())]
    }

    fn name(&self) -> &'static str {
        "scale"
    }
}

struct SumBackward;

impl<T: Scalar> BackwardFn<T> for SumBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![grad_out[0]; parents[0].len()])]
    }

    fn name(&self) -> &'static str {
        "sum"
    }
}

impl<T: Scalar> Tensor<T> {
    /// Elementwise `max(x, 0)`.
    pub fn relu(&self) -> Result<Tensor<T>> {
        let data = self
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(ReluBackward),
        ))
    }

    /// Elementwise addition of two same-shape tensors.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(TensorError::dim(
                "add",
                format!("shapes {:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(AddBackward),
        ))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(TensorError::dim(
                "mul",
                format!("shapes {:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(MulBackward),
        ))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&self, factor: f64) -> Result<Tensor<T>> {
        let f = T::from_f64(factor);
        let data = self.data().iter().map(|&v| v * f).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(ScaleBackward(f)),
        ))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let s: T = self.data().iter().copied().sum();
        Ok(Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(SumBackward),
        ))
    }
}
