//! Growth rates of quadratic-exponential functionals for stable linear
//! quantum stochastic systems.
//!
//! The crate computes the infinite-horizon growth rate of the
//! quadratic-exponential functional of an open quantum harmonic oscillator
//! in its invariant Gaussian state, three ways:
//!
//! * a state-space method: a recurrent sequence of algebraic Lyapunov
//!   equations builds a truncated shaping filter whose stabilizing algebraic
//!   Riccati equation yields the rate ([`state_space::qef_rate_ss`]);
//! * direct frequency-domain quadrature of a stabilized log-determinant
//!   representation ([`freq_domain::qef_rate_direct`]);
//! * a homotopy in the risk sensitivity integrating a Riccati ODE per
//!   frequency node ([`freq_domain::qef_rate_homotopy`]).
//!
//! The three routes agree within quadrature and truncation tolerances and
//! cross-check each other; the risk-sensitivity thresholds
//! ([`freq_domain::theta_star`], [`freq_domain::theta_zero`]) bound the
//! parameter range on which the frequency-domain representation is valid.

pub mod cascade;
pub mod error;
pub mod freq_domain;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod state_space;

pub use cascade::{
    assemble_filter, assemble_weight, compute_cascade, phi_taylor_coeffs, psi_coeffs,
    realified_sqrt, scheme_weights, CascadeCoefficients, CoefficientScheme, SchemeKind,
    TruncatedFilter, WeightMatrix,
};
pub use error::{Error, Result};
pub use freq_domain::{
    delta_spectral, qef_rate_direct, qef_rate_homotopy, spectral_samples, theta_star, theta_zero,
    SpectralSamples, DEFAULT_HOMOTOPY_STEPS,
};
pub use grid::{FrequencyGrid, DEFAULT_NODES};
pub use linalg::{
    hermitian_matfun, hermitian_matfun_real, solve_are_stabilizing, solve_lyapunov, AreSolution,
    SpectralDecomposition,
};
pub use model::{ModelDiagnostics, OqhoModel};
pub use state_space::{
    check_spec2, invariant_covariance, qef_rate_ss, qef_rate_zeroth, rate_sweep, RateResult,
    Spec2Report,
};
