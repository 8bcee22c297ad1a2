//! State-space QEF rate of the truncated shaping filter: the stabilizing
//! Riccati solve, the order-zero closed form, per-order validity checks,
//! the invariant covariance of the filter state and theta sweeps.

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::cascade::{
    assemble_filter, assemble_weight, compute_cascade, scheme_weights, CoefficientScheme,
    SchemeKind, TruncatedFilter,
};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::linalg::{
    hermitian_eigen, require_hurwitz, solve_are_stabilizing_from, solve_lyapunov,
    spectral_abscissa, symmetrize, to_complex, AreSolution, CMatrix,
};
use crate::model::OqhoModel;

/// One computed rate point together with its Riccati certificates.
#[derive(Debug, Clone)]
pub struct RateResult {
    pub theta: f64,
    pub r: usize,
    pub scheme: SchemeKind,
    /// Rate value; NaN when the point is invalid.
    pub rate: f64,
    pub newton_iterations: usize,
    /// Frobenius norm of the Riccati residual.
    pub are_residual: f64,
    /// Spectral abscissa of the closed-loop matrix.
    pub closed_loop_abscissa: f64,
    /// True when the residual meets its tolerance and the closed loop is
    /// strictly stable.
    pub valid: bool,
}

impl Serialize for RateResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("RateResult", 8)?;
        s.serialize_field("theta", &self.theta)?;
        s.serialize_field("r", &self.r)?;
        s.serialize_field("scheme", self.scheme.as_str())?;
        s.serialize_field("rate", &self.rate)?;
        s.serialize_field("newton_iterations", &self.newton_iterations)?;
        s.serialize_field("are_residual", &self.are_residual)?;
        s.serialize_field("closed_loop_abscissa", &self.closed_loop_abscissa)?;
        s.serialize_field("valid", &self.valid)?;
        s.end()
    }
}

impl RateResult {
    fn at_zero(model: &OqhoModel, r: usize, scheme: SchemeKind) -> Self {
        let abscissa = spectral_abscissa(model.a());
        RateResult {
            theta: 0.0,
            r,
            scheme,
            rate: 0.0,
            newton_iterations: 0,
            are_residual: 0.0,
            closed_loop_abscissa: abscissa,
            valid: abscissa < 0.0,
        }
    }

    fn failed(theta: f64, r: usize, scheme: SchemeKind) -> Self {
        RateResult {
            theta,
            r,
            scheme,
            rate: f64::NAN,
            newton_iterations: 0,
            are_residual: f64::NAN,
            closed_loop_abscissa: f64::NAN,
            valid: false,
        }
    }
}

/// Solves the filter Riccati equation
/// Acal^T a + a Acal + theta H + a Bcal Bcal^T a = 0 and evaluates the rate
/// (1/4) Tr(R(S)^2 a_11), which uses only the leading diagonal block of the
/// solution because the input Gramian vanishes elsewhere.
fn rate_from_are(
    filter: &TruncatedFilter,
    h: &DMatrix<f64>,
    theta: f64,
    start: Option<&DMatrix<f64>>,
) -> Result<(f64, AreSolution)> {
    let sigma = filter.input_gram();
    let q = h * theta;
    let sol = solve_are_stabilizing_from(&filter.acal, &sigma, &q, start)?;
    let two_n = filter.rs.nrows();
    let rs_sq = symmetrize(&(&filter.rs * filter.rs.transpose()));
    let a11 = sol.solution.view((0, 0), (two_n, two_n)).clone_owned();
    let rate = 0.25 * (rs_sq * a11).trace();
    Ok((rate, sol))
}

fn result_from(theta: f64, r: usize, scheme: SchemeKind, rate: f64, sol: &AreSolution, q_norm: f64) -> RateResult {
    let valid = sol.residual <= 1e-10 * (1.0 + q_norm) && sol.closed_loop_abscissa < 0.0;
    RateResult {
        theta,
        r,
        scheme,
        rate,
        newton_iterations: sol.iterations,
        are_residual: sol.residual,
        closed_loop_abscissa: sol.closed_loop_abscissa,
        valid,
    }
}

/// Truncated QEF rate at order r via the stabilizing Riccati equation.
pub fn qef_rate_ss(
    model: &OqhoModel,
    theta: f64,
    r: usize,
    scheme: SchemeKind,
) -> Result<RateResult> {
    Ok(qef_rate_ss_with_solution(model, theta, r, scheme)?.0)
}

/// Same as [`qef_rate_ss`], also returning the Riccati solution matrix (for
/// warm starts and structural checks).
pub fn qef_rate_ss_with_solution(
    model: &OqhoModel,
    theta: f64,
    r: usize,
    scheme: SchemeKind,
) -> Result<(RateResult, DMatrix<f64>)> {
    if theta < 0.0 {
        return Err(Error::InvalidArgument(
            "risk sensitivity must be nonnegative".into(),
        ));
    }
    require_hurwitz(model.a())?;
    if theta == 0.0 {
        let nu = 4 * (r + 1) * model.n();
        return Ok((
            RateResult::at_zero(model, r, scheme),
            DMatrix::zeros(nu, nu),
        ));
    }
    let coeffs = compute_cascade(model, r)?;
    let filter = assemble_filter(model, &coeffs, r)?;
    let weights = scheme_weights(scheme, r);
    let weight = assemble_weight(&coeffs, &weights, theta, r)?;
    let (rate, sol) = rate_from_are(&filter, &weight.h, theta, None)?;
    let q_norm = (&weight.h * theta).norm();
    let result = result_from(theta, r, scheme, rate, &sol, q_norm);
    Ok((result, sol.solution))
}

/// Order-zero rate assembled directly from the closed-form filter
///
///   Acal_0 = [[I_2 (x) A, 0], [I_2 (x) gamma_0, I_2 (x) A]],
///   Bcal_0 = [R(S); 0],
///   h_0    = diag(I_{2n}, theta bmat2 (x) gamma_0^{-1} mho gamma_0^{-1}),
///
/// where gamma_0 = L_A(mho) equals the CCR matrix for exactly realizable
/// data.  No cascade recursion is involved; agrees with `qef_rate_ss` at
/// r = 0.
pub fn qef_rate_zeroth(model: &OqhoModel, theta: f64) -> Result<RateResult> {
    if theta < 0.0 {
        return Err(Error::InvalidArgument(
            "risk sensitivity must be nonnegative".into(),
        ));
    }
    require_hurwitz(model.a())?;
    if theta == 0.0 {
        return Ok(RateResult::at_zero(model, 0, SchemeKind::Taylor));
    }

    let mho = model.mho();
    let gamma0 = solve_lyapunov(model.a(), &mho)?;

    let n = model.n();
    let two_n = 2 * n;
    let nu = 4 * n;
    let mut acal = DMatrix::<f64>::zeros(nu, nu);
    for blk in 0..2 {
        for copy in 0..2 {
            acal.view_mut((blk * two_n + copy * n, blk * two_n + copy * n), (n, n))
                .copy_from(model.a());
        }
    }
    acal.view_mut((two_n, 0), (n, n)).copy_from(&gamma0);
    acal.view_mut((two_n + n, n), (n, n)).copy_from(&gamma0);

    let rs = crate::cascade::realified_sqrt(model)?;
    let mut bcal = DMatrix::<f64>::zeros(nu, two_n);
    bcal.view_mut((0, 0), (two_n, two_n)).copy_from(&rs);
    let filter = TruncatedFilter {
        r: 0,
        nu,
        acal,
        bcal,
        rs,
    };

    // beta_1 = gamma_0^{-1} mho gamma_0^{-1} through two solves.
    let lu = gamma0.clone().lu();
    let w = lu
        .solve(&mho)
        .ok_or_else(|| Error::SolveFailure("gamma[0] solve failed".into()))?;
    let beta1 = gamma0
        .transpose()
        .lu()
        .solve(&w.transpose())
        .ok_or_else(|| Error::SolveFailure("gamma[0] solve failed".into()))?
        .transpose();

    let mut h = DMatrix::<f64>::zeros(nu, nu);
    h.view_mut((0, 0), (two_n, two_n))
        .copy_from(&DMatrix::identity(two_n, two_n));
    let block = &beta1 * theta;
    h.view_mut((two_n, two_n + n), (n, n)).copy_from(&block);
    h.view_mut((two_n + n, two_n), (n, n)).copy_from(&(-&block));
    let h = symmetrize(&h);

    let (rate, sol) = rate_from_are(&filter, &h, theta, None)?;
    let q_norm = (&h * theta).norm();
    Ok(result_from(theta, 0, SchemeKind::Taylor, rate, &sol, q_norm))
}

/// Validity margin of the truncated representation on a frequency grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Spec2Report {
    /// theta times the grid supremum of the largest eigenvalue of
    /// f_r(i lambda)^* H f_r(i lambda).
    pub margin: f64,
    pub pass: bool,
}

/// Evaluates the filter transfer function f_r = (i lambda I - Acal)^{-1}
/// Bcal over the grid and reports the weighted supremum condition.
pub fn check_spec2(
    model: &OqhoModel,
    theta: f64,
    r: usize,
    grid: &FrequencyGrid,
) -> Result<Spec2Report> {
    require_hurwitz(model.a())?;
    let coeffs = compute_cascade(model, r)?;
    let filter = assemble_filter(model, &coeffs, r)?;
    let weights = scheme_weights(SchemeKind::Taylor, r);
    let weight = assemble_weight(&coeffs, &weights, theta, r)?;
    let h = to_complex(&weight.h);
    let acal = to_complex(&filter.acal);
    let bcal = to_complex(&filter.bcal);
    let nu = filter.nu;

    let sups: Result<Vec<f64>> = grid
        .nodes()
        .par_iter()
        .map(|&lambda| {
            let shifted = CMatrix::from_diagonal_element(nu, nu, Complex::new(0.0, lambda)) - &acal;
            let f = shifted
                .lu()
                .solve(&bcal)
                .ok_or_else(|| Error::SolveFailure("filter resolvent singular".into()))?;
            let m = f.adjoint() * &h * &f;
            Ok(hermitian_eigen(&((&m + m.adjoint()) * Complex::new(0.5, 0.0)))?.max_eigenvalue())
        })
        .collect();
    let sup = sups?.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let margin = theta * sup;
    Ok(Spec2Report {
        margin,
        pass: margin < 1.0,
    })
}

/// Invariant covariance of the filter state: the solution of
/// Acal P + P Acal^T + Bcal Bcal^T = 0.
pub fn invariant_covariance(filter: &TruncatedFilter) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&solve_lyapunov(
        &filter.acal,
        &filter.input_gram(),
    )?))
}

/// Rates over an ascending list of risk sensitivities with warm-started
/// Newton iterations.  Per-point failures are flagged in the results rather
/// than aborting the sweep; cascade-level failures abort since no point can
/// be computed without the coefficients.
pub fn rate_sweep(
    model: &OqhoModel,
    thetas: &[f64],
    r: usize,
    scheme: SchemeKind,
) -> Result<Vec<RateResult>> {
    if thetas.windows(2).any(|w| w[1] < w[0]) || thetas.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidArgument(
            "theta list must be nonnegative and ascending".into(),
        ));
    }
    require_hurwitz(model.a())?;
    let coeffs = compute_cascade(model, r)?;
    let filter = assemble_filter(model, &coeffs, r)?;
    let weights = scheme_weights(scheme, r);
    let mut results = Vec::with_capacity(thetas.len());
    let mut warm: Option<DMatrix<f64>> = None;

    for &theta in thetas {
        if theta == 0.0 {
            results.push(RateResult::at_zero(model, r, scheme));
            continue;
        }
        match sweep_point(&filter, &coeffs_weight(&coeffs, &weights, theta, r)?, theta, r, scheme, warm.as_ref()) {
            Ok((result, solution)) => {
                warm = Some(solution);
                results.push(result);
            }
            Err(
                Error::StabilizingSolutionLost { .. }
                | Error::NoConvergence { .. }
                | Error::SolveFailure(_),
            ) => {
                warm = None;
                results.push(RateResult::failed(theta, r, scheme));
            }
            Err(other) => return Err(other),
        }
    }
    Ok(results)
}

fn coeffs_weight(
    coeffs: &crate::cascade::CascadeCoefficients,
    weights: &CoefficientScheme,
    theta: f64,
    r: usize,
) -> Result<DMatrix<f64>> {
    Ok(assemble_weight(coeffs, weights, theta, r)?.h)
}

fn sweep_point(
    filter: &TruncatedFilter,
    h: &DMatrix<f64>,
    theta: f64,
    r: usize,
    scheme: SchemeKind,
    warm: Option<&DMatrix<f64>>,
) -> Result<(RateResult, DMatrix<f64>)> {
    let (rate, sol) = rate_from_are(filter, h, theta, warm)?;
    let q_norm = (h * theta).norm();
    let result = result_from(theta, r, scheme, rate, &sol, q_norm);
    Ok((result, sol.solution))
}
