//! Latent-space modeling of periodic physical human-robot interaction.
//!
//! The crate is organized bottom-up:
//!
//! - [`crc`]: complex-valued (and real-valued) reservoir computing with
//!   stability-preserving initialization and spectral analysis.
//! - [`nn`]: a small reverse-mode autodiff tape over dense matrices, with the
//!   layers, distribution heads, divergences and optimizer the model needs.
//! - [`model`]: the variational recurrent interaction model (state encoder,
//!   priors, policy, latent dynamics, student-t decoder) and its training loop.
//! - [`sim`]: an admittance-controlled one-joint robot with trapezoidal and
//!   cosine velocity profiles plus a synthetic 18-keypoint human observer.
//! - [`metrics`]: silhouette score and cluster statistics.
//! - [`experiment`]: reproducible runs (generate, train, ablate, eval, latent,
//!   fft) used by the `phri` command-line tool.

pub mod crc;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod snapshot;

pub use error::{PhriError, Result};
