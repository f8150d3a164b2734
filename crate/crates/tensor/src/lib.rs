//! Minimal tensor library with reverse-mode automatic differentiation.
//!
//! Tensors are row-major, CPU-only, and generic over the element type:
//! `f32` for training, `f64` for gradient verification. Every differentiable
//! operation records its inputs so that [`Tensor::backward`] can accumulate
//! gradients by walking the recorded graph once in reverse topological order.
//!
//! The op set is deliberately small: exactly what an encoder-decoder
//! segmentation/classification network needs (convolution, batch
//! normalization, bilinear resampling, adaptive average pooling, affine
//! layers, softmax cross-entropy, and a handful of elementwise ops), plus an
//! SGD optimizer and a central finite-difference gradient checker.

mod error;
mod gemm;
mod scalar;
mod tensor;

pub mod gradcheck;
pub mod ops;
pub mod optim;

pub use error::{Result, TensorError};
pub use ops::conv::Conv2dCfg;
pub use ops::norm::{BnMode, BnStats};
pub use scalar::Scalar;
pub use tensor::Tensor;
