//! Open-set semantic segmentation of aerial image tiles.
//!
//! A patch CNN classifies every pixel from its 55×55 context window. Pixels
//! whose top softmax probability falls below a threshold are labeled
//! [`labels::UNKNOWN`], and an erosion-style filter can then hand isolated
//! unknown pixels back to the dominant neighboring class. The crate also
//! carries the leave-one-class-out evaluation protocol and its metrics.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod labels;
pub mod metrics;
pub mod net;
pub mod openset;
pub mod tensor;

pub use error::{Error, Result};
