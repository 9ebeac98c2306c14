//! Hair-mask segmentation for dermoscopic images.
//!
//! A hierarchical-transformer segmentation network with a dropout layer ahead
//! of its classifier, built on a small reverse-mode autodiff engine, together
//! with the k-fold training protocol and overlap/perceptual evaluation metrics
//! used to assess it.

pub mod data;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod par;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
