//! One-shot coding over acyclic discrete networks.
//!
//! Exponential-process codebooks, Poisson functional representation
//! encoding, refinement-based soft decoding, exact and Monte Carlo
//! achievability bounds, and preset network scenarios.

pub mod bounds;
pub mod codec;
pub mod error;
pub mod expproc;
pub mod network;
pub mod prob;
pub mod rng;
pub mod scenarios;
pub mod stats;

pub use error::{Error, Result};
