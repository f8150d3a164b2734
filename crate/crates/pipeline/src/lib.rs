//! Everything around the network: procedural ROI generation, tiling and
//! stitching, discriminative instance selection and mask fusion, histogram
//! features with the diagnosis MLP, training loops, and evaluation metrics.

pub mod augment;
pub mod dataset;
pub mod discriminative;
pub mod features;
pub mod infer;
pub mod metrics;
pub mod mlp;
pub mod pnm;
pub mod roi;
pub mod schedule;
pub mod stitch;
pub mod synth;
pub mod tiling;
pub mod train;

mod error;

pub use error::{PipelineError, Result};
pub use roi::{DiscriminativeMask, RoiImage, SegMask};
