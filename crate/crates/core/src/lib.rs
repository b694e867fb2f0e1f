//! Kac particle systems for Maxwell molecules, couplings with cutoff nonlinear
//! processes, and Wasserstein instrumentation for propagation-of-chaos rates.

pub mod assignment;
pub mod circle;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod kac;
pub mod moments;
pub mod nonlinear;
pub mod quadrature;
pub mod rng;
pub mod selftest;
pub mod stats;
pub mod velocity;
pub mod wasserstein;

pub use error::{Error, Result};
pub use velocity::Velocity;
