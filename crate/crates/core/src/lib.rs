//! Numerical laboratory for Markovian BSDEs whose driver contains a
//! distributional drift `b ∈ C([0,T]; H^{-β}_q)`.
//!
//! The pipeline: spectral fractional Sobolev calculus on a periodic box
//! ([`grid`], [`spectral`]), the distribution-function product
//! ([`paraproduct`]), the admissible parameter region ([`params`]), mild
//! solutions by Picard iteration ([`mild`]), the occupation-time operator and
//! its chain rule ([`occupation`]), Monte Carlo BSDE checks ([`bsde`]), Haar
//! and mollifier projectors ([`haar`]) and drift generators ([`drivers`]).

pub mod bsde;
pub mod cli;
pub mod drivers;
pub mod error;
pub mod grid;
pub mod haar;
pub mod interp;
pub mod mild;
pub mod occupation;
pub mod paraproduct;
pub mod params;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, Spectrum};
pub use mild::{TimeField, TimeGrid};
pub use params::{ParamCandidate, ParamSet};
pub use spectral::SobolevIndex;
