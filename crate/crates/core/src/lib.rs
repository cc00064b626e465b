//! Codec-in-the-loop workbench: trains a learned video downsampler through a
//! real, non-differentiable codec using a surrogate gradient built from the
//! actual compression error, then evaluates the result with a multi-scale /
//! multi-QP rate-distortion sweep, convex hulls, and BD-rate against a
//! Lanczos baseline.

pub mod codec;
pub mod config;
pub mod dct;
pub mod error;
pub mod eval;
pub mod media;
pub mod model;
pub mod rateproxy;
pub mod resample;
pub mod rng;
pub mod surrogate;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod verify;

pub mod cli;

pub use error::{Error, Result};
