//! Meta-value learning and opponent-shaping baselines on exactly
//! differentiable two-player games.

pub mod baselines;
pub mod deriv;
pub mod error;
pub mod games;
pub mod harness;
pub mod meva;
pub mod registry;
pub mod valuenet;

pub use error::{Error, Result};
