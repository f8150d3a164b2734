//! Network assembly: plug-and-play convolutional blocks behind one
//! interface, and the two-branch encoder-decoder built from them.
//!
//! The segmentation stage is a U-Net-style encoder-decoder whose encoding
//! and decoding blocks are interchangeable ([`blocks::BlockKind`]). A
//! classification branch can be attached afterwards; it continues the
//! encoder three spatial levels deeper and ends in two fully connected
//! layers. Width (`w`) and depth (`d`) multipliers scale the whole family.

pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod init;
pub mod layers;
pub mod ynet;

mod error;

pub use blocks::{Block, BlockKind, BlockSpec};
pub use config::{NetworkConfig, Sharing};
pub use error::{ModelError, Result};
pub use layers::Mode;
pub use ynet::{JointOutput, YNet};
