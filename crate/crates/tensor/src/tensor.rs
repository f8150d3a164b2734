use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Gradient rule recorded alongside an op's output.
///
/// `apply` receives the output gradient and the op's inputs and returns one
/// gradient buffer per input (`None` for inputs that do not need one).
pub(crate) trait BackwardFn<T: Scalar> {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>>;
    fn name(&self) -> &'static str;
}

pub(crate) struct Node<T: Scalar> {
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<Box<dyn BackwardFn<T>>>,
}

/// An n-dimensional row-major array of floating values.
///
/// Cloning is cheap (shared handle). A tensor either is a *leaf* (input or
/// parameter) or remembers the operation that produced it, which is what
/// [`Tensor::backward`] walks. Data and gradient live behind `RefCell` so
/// that optimizer steps and gradient accumulation work through shared
/// handles; the graph for one training step stays on one thread.
pub struct Tensor<T: Scalar> {
    node: Rc<Node<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.shape(),
            self.requires_grad()
        )
    }
}

impl<T: Scalar> Tensor<T> {
    fn new(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<Box<dyn BackwardFn<T>>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            node: Rc::new(Node {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward,
            }),
        }
    }

    /// A constant leaf (no gradient tracking).
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::dim(
                "from_vec",
                format!("shape {:?} needs {} values, got {}", shape, shape.iter().product::<usize>(), data.len()),
            ));
        }
        Ok(Self::new(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// A trainable leaf: gradients accumulate here during `backward`.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::dim(
                "param",
                format!("shape {:?} needs {} values, got {}", shape, shape.iter().product::<usize>(), data.len()),
            ));
        }
        Ok(Self::new(shape.to_vec(), data, true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), vec![T::zero(); len], false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; len], false, Vec::new(), None)
    }

    pub fn scalar(value: T) -> Self {
        Self::new(vec![1], vec![value], false, Vec::new(), None)
    }

    /// Builds an op output node. Parents are recorded only when some parent
    /// tracks gradients; otherwise the result is a detached constant.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: Box<dyn BackwardFn<T>>,
    ) -> Self {
        if cfg!(debug_assertions) {
            debug_assert!(
                data.iter().all(|v| v.is_finite()),
                "non-finite value out of op `{}`",
                backward.name()
            );
        }
        let track = parents.iter().any(|p| p.requires_grad());
        if track {
            Self::new(shape, data, true, parents, Some(backward))
        } else {
            Self::new(shape, data, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn len(&self) -> usize {
        self.node.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Borrow the raw values (row-major).
    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.borrow().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        let d = self.node.data.borrow();
        if d.len() != 1 {
            return Err(TensorError::dim(
                "item",
                format!("expected scalar, shape is {:?}", self.shape()),
            ));
        }
        Ok(d[0])
    }

    /// Overwrite the stored values in place (shape is unchanged).
    ///
    /// Used by the optimizer and by checkpoint loading; any handle sharing
    /// this tensor observes the new values.
    pub fn set_data(&self, values: &[T]) -> Result<()> {
        let mut d = self.node.data.borrow_mut();
        if d.len() != values.len() {
            return Err(TensorError::dim(
                "set_data",
                format!("have {} values, got {}", d.len(), values.len()),
            ));
        }
        d.copy_from_slice(values);
        Ok(())
    }

    /// Current accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    pub fn has_grad(&self) -> bool {
        self.node.grad.borrow().is_some()
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[T]) {
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi = *gi + *ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// In-place axpy on the data: `data += alpha * v`. Optimizer use.
    pub(crate) fn axpy_data(&self, alpha: T, v: &[T]) {
        let mut d = self.node.data.borrow_mut();
        for (di, vi) in d.iter_mut().zip(v) {
            *di = *di + alpha * *vi;
        }
    }

    pub fn assert_finite(&self, context: &'static str) -> Result<()> {
        if self.node.data.borrow().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::numeric(context, "tensor contains NaN or Inf"))
        }
    }

    fn ptr_id(&self) -> *const Node<T> {
        Rc::as_ptr(&self.node)
    }

    /// Reverse-mode gradient accumulation from a scalar output.
    ///
    /// Walks the recorded graph exactly once per node in reverse topological
    /// order; fan-out contributions add. Gradients land in every tensor that
    /// participates and requires gradients; intermediate buffers are freed as
    /// soon as they have been consumed. Repeated calls (e.g. once per batch
    /// element) keep accumulating into leaf gradients.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(TensorError::dim(
                "backward",
                format!("loss must be scalar, shape is {:?}", self.shape()),
            ));
        }
        if !self.node.requires_grad {
            return Ok(()); // constant graph: nothing to do
        }

        // Iterative DFS post-order over grad-requiring nodes.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut visited: HashSet<*const Node<T>> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.ptr_id());
        while let Some((node, child_idx)) = stack.pop() {
            if child_idx < node.node.parents.len() {
                stack.push((node.clone(), child_idx + 1));
                let parent = node.node.parents[child_idx].clone();
                if parent.requires_grad() && visited.insert(parent.ptr_id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }

        self.accumulate_grad(&[T::one()]);
        for node in order.iter().rev() {
            let Some(bw) = node.node.backward.as_ref() else {
                continue; // leaf: gradient stays put
            };
            // Our own gradient is complete; take it so the buffer frees early.
            let grad_out = node.node.grad.borrow_mut().take();
            let Some(grad_out) = grad_out else {
                continue; // branch that never received gradient
            };
            let contribs = bw.apply(&grad_out, &node.node.parents);
            debug_assert_eq!(contribs.len(), node.node.parents.len());
            for (parent, contrib) in node.node.parents.iter().zip(contribs) {
                if let Some(c) = contrib {
                    if parent.requires_grad() {
                        debug_assert_eq!(c.len(), parent.len(), "bad grad from {}", bw.name());
                        parent.accumulate_grad(&c);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn backward_requires_scalar() {
        let t = Tensor::<f64>::param(&[2], vec![1.0, 2.0]).unwrap();
        assert!(t.backward().is_err());
    }

    #[test]
    fn fan_out_gradients_add() {
        // y = x + x  =>  dy/dx = 2
        let x = Tensor::<f64>::param(&[1], vec![3.0]).unwrap();
        let y = x.add(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn accumulation_across_backward_calls() {
        let x = Tensor::<f64>::param(&[1], vec![3.0]).unwrap();
        for _ in 0..2 {
            let y = x.scale(2.0).unwrap();
            y.backward().unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![4.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }
}
