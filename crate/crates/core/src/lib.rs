//! Composite-solution immersed boundary solvers on staggered Cartesian grids.
//!
//! The crate provides mimetic finite-difference operators, regularized delta
//! kernels, marker regularization and interpolation, indicator fields, Poisson
//! and Schur-complement solvers, and two immersed boundary formulations
//! (composite and prototypical) for Dirichlet Poisson problems and
//! incompressible Navier-Stokes flow.

pub mod bench;
pub mod ddf;
pub mod grid;
pub mod immersed;
pub mod indicator;
pub mod linsolve;
pub mod ns_ib;
pub mod ops;
pub mod poisson_ib;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("delta kernel support clipped by the grid boundary at marker {marker}")]
    ClippedSupport { marker: usize },
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("non-finite values detected: {0}")]
    NonFinite(String),
    #[error("maximum step count {0} reached before steady state")]
    MaxSteps(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
