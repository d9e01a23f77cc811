//! Numerical toolkit for the multiscale analysis of a two dimensional Fermi liquid.
//!
//! Scale decompositions of propagators, truncated majorant series, Fermi curve
//! sectorizations, four legged kernel algebra, particle-hole ladder recursions,
//! self-energy resummation and occupation-number quadrature.

pub mod config;
pub mod emit;
pub mod error;
pub mod hoelder;
pub mod kernel_algebra;
pub mod ladder_engine;
pub mod model_scales;
pub mod occupation;
pub mod quadrature;
pub mod scenario;
pub mod sector_geometry;
pub mod selfenergy;
pub mod series_norms;

pub use error::{Error, Result};
pub use model_scales::{Dispersion, Momentum, QuadraticModel, ScaleInterval, ScaleParams};
pub use num_complex::Complex64;
