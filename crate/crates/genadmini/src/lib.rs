//! Desk-scale latent video diffusion for driving scenes.
//!
//! The crate trains a two-stage denoising model — per-frame spatial blocks
//! first, interleaved temporal reasoning blocks second — inside the latent
//! space of a small convolutional autoencoder, over a deterministic
//! synthetic driving world. Downstream heads (action-conditioned
//! fine-tuning, an inverse dynamics model, and a frozen-encoder planner)
//! and the metric suite round out the pipeline.
//!
//! All numerics are generic over [`scalar::Scalar`]; `f32` is the working
//! precision for training (see [`Real`]) and `f64` backs the
//! finite-difference oracles in the tests.

pub mod nn;
pub mod synthworld;
pub mod rng;
pub mod scalar;

/// Default working precision for training and inference.
pub type Real = f32;
