//! Cooperative localization and clock synchronization by Gaussian message
//! passing on factor graphs.
//!
//! Internally every clock offset is carried as an equivalent range `c·θ` in
//! meters. Public accessors that report clock offsets in seconds say so.

pub mod baselines;
pub mod bp;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod linearize;
pub mod metrics;
pub mod model;
pub mod quadrature;
pub mod schedule;
pub mod vmp;
pub mod world;

pub use error::{Error, Result};
pub use gaussian::{divide, mmse_estimate, moment_match, product, Gaussian1D, Integrand};

/// Speed of light in m/s.
pub const C: f64 = 299_792_458.0;
