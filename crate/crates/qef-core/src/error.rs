//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A matrix that must be Hurwitz has an eigenvalue on or right of the
    /// imaginary axis.
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.6e})")]
    NotHurwitz { abscissa: f64 },

    /// A dense factorization or linear solve failed or produced a residual
    /// far beyond the requested tolerance.
    #[error("dense solve failed: {0}")]
    SolveFailure(String),

    /// Input to a Hermitian routine is not Hermitian within tolerance.
    #[error("matrix is not Hermitian (relative asymmetry {residual:.3e})")]
    NotHermitian { residual: f64 },

    /// A matrix expected to be positive semidefinite has a clearly negative
    /// eigenvalue.
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },

    /// A Newton iterate of the Riccati solver left the stabilizing region,
    /// i.e. its closed-loop matrix is no longer Hurwitz.  For the rate
    /// computation this signals a risk sensitivity beyond the validity range
    /// of the current truncation.
    #[error(
        "Newton iterate {iteration} lost the stabilizing property \
         (closed-loop abscissa {abscissa:.6e})"
    )]
    StabilizingSolutionLost { iteration: usize, abscissa: f64 },

    /// The Riccati iteration ran out of iterations before meeting the
    /// residual tolerance.
    #[error("Riccati iteration did not converge in {max_iterations} iterations (residual {residual:.3e})")]
    NoConvergence { max_iterations: usize, residual: f64 },

    /// A gamma matrix of the cascade recursion is numerically singular, so
    /// the coefficient scheme cannot be continued to the requested order.
    #[error("cascade matrix gamma[{index}] is numerically singular (condition number {condition:.3e})")]
    GammaSingular { index: usize, condition: f64 },

    /// The coordinate transform matrix is singular.
    #[error("transform matrix is singular")]
    SingularTransform,

    /// The Lyapunov solution used by the transposition identity is
    /// numerically singular.
    #[error("Lyapunov solution is numerically singular (condition number {condition:.3e})")]
    SingularV { condition: f64 },

    /// Random model generation exhausted its retry budget.
    #[error("no admissible random model found after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    /// The requested risk sensitivity lies beyond the threshold where the
    /// frequency-domain rate representation is valid.
    #[error("theta = {theta:.6e} is beyond the validity threshold of the rate representation")]
    ThetaBeyondThreshold { theta: f64 },

    /// The Riccati ODE of the homotopy method blew up before reaching the
    /// requested risk sensitivity.
    #[error("Riccati ODE blew up at theta = {theta:.6e} (state norm {norm:.3e})")]
    OdeBlowup { theta: f64, norm: f64 },

    /// Structural problem with a model (shape mismatch, odd dimensions,
    /// degenerate CCR matrix, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A model file could not be parsed.
    #[error("model parse error: {0}")]
    Parse(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
