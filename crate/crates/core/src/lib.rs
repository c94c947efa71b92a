//! Traveling waves of reaction-diffusion systems under scalar
//! multiplicative noise: deterministic and noise-modified profiles, the
//! coupled wave/phase SPDE, and Monte Carlo estimators built on top.

pub mod banded;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod modwave;
pub mod noiseterms;
pub mod profiles;
pub mod simulate;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
