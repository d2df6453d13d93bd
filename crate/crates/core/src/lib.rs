//! Weakly supervised comparison of parking-lot occupancy between two
//! satellite chips of the same lot.
//!
//! The crate covers the whole pipeline: POI-to-lot matching ([`geodata`]),
//! chip storage and quality control ([`imaging`]), Saturday/Sunday weak labels
//! and lot-level splits ([`weakpairs`]), the shared-encoder comparison model
//! ([`pairnet`]), AUC and date ranking ([`evalrank`]), and a synthetic scene
//! generator used to verify the learning claims ([`synthscene`]).
//!
//! Numeric model code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the two concrete instantiations.

pub mod error;
pub mod evalrank;
pub mod geodata;
pub mod imaging;
pub mod pairnet;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod synthscene;
pub mod weakpairs;

mod fsio;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision model used for training and checkpoints.
pub type PairNetF32 = pairnet::PairNet<f32>;
/// Double-precision model used for gradient checks.
pub type PairNetF64 = pairnet::PairNet<f64>;
