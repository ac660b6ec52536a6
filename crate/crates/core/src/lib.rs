//! Consistency-weighted direct RGB-D visual odometry.
//!
//! Per-pixel photometric and geometric uncertainty for adjacent frame pairs
//! is turned into a quality prior on each host keyframe. The prior biases
//! support-pixel selection and weights the Gauss-Newton pose update, with the
//! geometric weight acting only on the translational block.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmap;
pub mod config;
pub mod consistency;
pub mod dataset;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod provider;
pub mod quality;
pub mod selector;
pub mod suite;
pub mod synth;
pub mod tracker;
pub mod trajectory;

pub use error::{Error, Result};
pub use frame::RgbdFrame;
pub use geometry::{Intrinsics, Se3Pose, Twist};
pub use image::{Grid, Image, Mask};
