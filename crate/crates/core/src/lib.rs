//! A convolutional network engine built from first principles: a rank-3
//! volume type, conv/ReLU/pool/fc layers with analytic gradients, an
//! architecture planner and linter, MNIST ingestion, a deterministic SGD
//! training loop, and versioned checkpointing.
//!
//! The crate deliberately avoids tensor frameworks; every forward and
//! backward pass is written out against [`volume::Volume`] so it can be
//! verified against brute-force and finite-difference oracles.

pub mod archfile;
pub mod error;
pub mod layers;
pub mod mnist;
pub mod planner;
pub mod rng;
pub mod store;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
pub use volume::Volume;
