//! Temporal depth cues for face anti-spoofing.
//!
//! - [`geometry`]: two-camera motion model and relative-depth estimates.
//! - [`depthlabel`]: dense depth labels from face vertices.
//! - [`features`]: Sobel gradients and optical-flow-guided feature blocks.
//! - [`recurrent`]: ConvGRU propagation and depth fusion.
//! - [`supervision`]: depth and binary losses.
//! - [`metrics`]: living score and APCER/BPCER/ACER/HTER.

pub mod depthlabel;
pub mod error;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod recurrent;
pub mod supervision;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::Grid;
pub use tensor::{conv2d, ConvKernel, Padding, Tensor};
