use thiserror::Error;

use crate::params::ParamRejection;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample in {0}")]
    NonFinite(&'static str),

    #[error("fields live on different grids or channel layouts: {0}")]
    Mismatch(String),

    #[error("integrability exponent r = {0} must exceed 1")]
    InvalidExponent(f64),

    #[error("Hölder exponent {0} must lie in (0, 1)")]
    InvalidHolderExponent(f64),

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter set rejected: {0}")]
    Params(#[from] ParamRejection),

    #[error("pointwise product does not converge: tail increments {tails:?} grow over the last three levels")]
    ProductNonConvergence { tails: Vec<f64> },

    #[error("no weight rho <= 1e9 makes the contraction factor fall below 1/2 (c = {c})")]
    NoContractionWeight { c: f64 },

    #[error("Picard iteration is not contracting: measured factor {factor:.4} >= 1 for 3 consecutive iterations")]
    NonContraction { factor: f64 },

    #[error("Picard iteration did not reach tol = {tol:e} within {max_iter} iterations (last increment {last:e})")]
    MaxIterations { tol: f64, max_iter: usize, last: f64 },

    #[error("driver is not certified as admissible: {0}")]
    UncertifiedDriver(String),

    #[error("path {path} leaves the computational box at t = {t:.6} (|x| = {x:.4} > {limit:.4})")]
    BoxExit { path: u64, t: f64, x: f64, limit: f64 },

    #[error("non-finite driver evaluation at t = {t}")]
    NonFiniteDriver { t: f64 },

    #[error("Haar machinery: {0}")]
    Haar(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
