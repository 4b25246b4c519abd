//! Magnetic heat kernels, flux-regularized derivative expansions and
//! grand-canonical quantum-gas thermodynamics, with an independent
//! finite-volume spectral oracle.
//!
//! The crate is organized around a single physical setup: a spinless
//! particle in a uniform magnetic field along `e3`, transverse gauge
//! `a(x) = (1/2) e3 ∧ x`, natural units, Hamiltonian `(-i∇ - ω a)²/2`.
//!
//! * [`magcore`] — gauge geometry: magnetic phase, triangle flux, path flux.
//! * [`jet`] — truncated univariate Taylor arithmetic (exact high-order
//!   derivatives in ω).
//! * [`mehler`] — the closed-form infinite-volume magnetic heat kernel,
//!   its diagonal, ω-derivative jets and the regularized kernels R₁, R₂.
//! * [`dyson`] — composition-indexed simplex integrals and the Monte-Carlo
//!   evaluation of the flux-regularized derivative expansion.
//! * [`oracle`] — discretized Dirichlet magnetic Hamiltonian on a cube:
//!   spectra, kernels, traces, pressure, finite-difference susceptibilities.
//! * [`thermo`] — infinite-volume pressure and susceptibility series.
//! * [`harness`] — convergence studies, the invariant battery, CSV output.

pub mod dyson;
pub mod harness;
pub mod jet;
pub mod magcore;
pub mod mehler;
pub mod oracle;
pub mod quad;
pub mod thermo;

/// Crate-wide error type. The variants map onto the CLI exit codes:
/// validation = 1, numerical = 2, resource cap = 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 1,
            Error::Numerical(_) => 2,
            Error::ResourceCap(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
