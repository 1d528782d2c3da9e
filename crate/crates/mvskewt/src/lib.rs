//! Matrix-variate skew-t (MVST) distribution toolkit.
//!
//! Provides exact log-density evaluation, random-matrix sampling via the
//! normal variance-mean mixture construction, and maximum-likelihood
//! parameter estimation with an expectation-conditional maximization (ECM)
//! algorithm, together with the special functions (log-scale modified Bessel
//! function of the third kind with real order, digamma, log-gamma) and
//! elementary distributions (matrix normal, inverse gamma, generalized
//! inverse Gaussian) the MVST machinery rests on.

pub mod dist;
pub mod ecm;
pub mod harness;
pub mod io;
pub mod mvst;
pub mod specfun;
pub mod util;

pub use dist::{GigExpectations, GigParams, InvGammaParams, MatNormParams};
pub use ecm::{fit, EStepStats, FitConfig, FitResult, InitStrategy};
pub use mvst::{Dataset, MvstParams, QuadForms};

/// Errors surfaced by the numerical library surface.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A Cholesky factorization failed even after the jitter retry.
    #[error("matrix '{which}' is not positive definite")]
    Factorization { which: String },
    /// A computation produced a non-finite intermediate.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The CM-step denominator collapsed (all latent weights near-constant).
    #[error("degenerate E-step weights: |sum(a_bar * b_i) - N| below threshold")]
    DegenerateWeights,
    /// Fewer observations than the estimator requires.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A fit step failed; carries the iteration index and the cause.
    #[error("fit aborted at iteration {iteration}: {source}")]
    FitStep {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
