//! The differentiable op set, one module per family.

pub mod conv;
pub mod elementwise;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod resize;
pub mod shape;
