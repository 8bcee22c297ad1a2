//! Dense numerical kernels shared by the rest of the crate: algebraic
//! Lyapunov solves, stabilizing algebraic Riccati solves and functions of
//! Hermitian matrices.
//!
//! All routines operate on dynamically sized `nalgebra` matrices.  Orders are
//! small (a few hundred at most), so everything is dense and the Lyapunov
//! solver works from a complex Schur form of the coefficient matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

/// Complex dense matrix alias used throughout the crate.
pub type CMatrix = DMatrix<Complex<f64>>;

/// A matrix counts as Hurwitz only if its spectral abscissa is strictly
/// below this margin; marginally stable matrices are rejected.
pub const HURWITZ_MARGIN: f64 = -1e-9;

/// Relative asymmetry above which a matrix is rejected as not Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Newton iteration cap for the Riccati solver.
pub const ARE_MAX_ITERATIONS: usize = 100;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.im)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn antisymmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex::new(0.5, 0.0)
}

/// Largest real part over the spectrum of a real square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    spectral_abscissa(a) < HURWITZ_MARGIN
}

/// Returns the spectral abscissa, or `NotHurwitz` if it is not safely
/// negative.
pub fn require_hurwitz(a: &DMatrix<f64>) -> Result<f64> {
    let abscissa = spectral_abscissa(a);
    if abscissa < HURWITZ_MARGIN {
        Ok(abscissa)
    } else {
        Err(Error::NotHurwitz { abscissa })
    }
}

/// Two-norm condition number from singular values; infinite when the
/// smallest singular value underflows to zero.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Resolvent (i lambda I - A)^{-1} of a real matrix on the imaginary axis.
pub fn resolvent(a: &DMatrix<f64>, lambda: f64) -> Result<CMatrix> {
    let n = a.nrows();
    let m = CMatrix::from_diagonal_element(n, n, Complex::new(0.0, lambda)) - to_complex(a);
    m.lu()
        .try_inverse()
        .ok_or_else(|| Error::SolveFailure(format!("resolvent singular at lambda = {lambda}")))
}

/// Solves the algebraic Lyapunov equation A V + V A^T + U = 0 for a Hurwitz
/// matrix A.
///
/// The coefficient matrix is reduced to complex Schur form once and the
/// transformed equation is solved by back substitution over columns, so each
/// call costs O(n^3).  The result equals the integral of e^{tA} U e^{tA^T}
/// over the positive half-line.
pub fn solve_lyapunov(a: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || u.nrows() != n || u.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "lyapunov: A is {}x{}, U is {}x{}",
            a.nrows(),
            a.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    require_hurwitz(a)?;

    let ac = to_complex(a);
    let schur = ac
        .try_schur(1e-14, 100_000)
        .ok_or_else(|| Error::SolveFailure("complex Schur iteration failed".into()))?;
    let (q, t) = schur.unpack();

    // A = Q T Q*, so with Y = Q* V Q and C = Q* U Q the equation becomes
    // T Y + Y T* + C = 0.  Column j couples only to columns k > j.
    let c = q.adjoint() * to_complex(u) * &q;
    let mut y = CMatrix::zeros(n, n);
    for j in (0..n).rev() {
        let mut rhs = -c.column(j).clone_owned();
        for k in (j + 1)..n {
            let tjk = t[(j, k)].conj();
            rhs.axpy(-tjk, &y.column(k).clone_owned(), Complex::new(1.0, 0.0));
        }
        let shift = t[(j, j)].conj();
        let mut tri = t.clone();
        for i in 0..n {
            tri[(i, i)] += shift;
        }
        let col = tri
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::SolveFailure("triangular Lyapunov step singular".into()))?;
        y.set_column(j, &col);
    }
    let v = real_part(&(&q * y * q.adjoint()));

    let residual = (a * &v + &v * a.transpose() + u).norm();
    let bound = 1e-10 * (1.0 + u.norm());
    if !residual.is_finite() || residual > bound {
        return Err(Error::SolveFailure(format!(
            "Lyapunov residual {residual:.3e} exceeds bound {bound:.3e}"
        )));
    }
    Ok(v)
}

/// Outcome of a stabilizing Riccati solve.
#[derive(Debug, Clone)]
pub struct AreSolution {
    /// Symmetric solution matrix.
    pub solution: DMatrix<f64>,
    /// Newton iterations consumed.
    pub iterations: usize,
    /// Frobenius norm of the final equation residual.
    pub residual: f64,
    /// Spectral abscissa of the closed-loop matrix `Acal + Sigma a`.
    pub closed_loop_abscissa: f64,
}

/// Solves Acal^T a + a Acal + Q + a Sigma a = 0 for the stabilizing solution,
/// i.e. the symmetric `a` making `Acal + Sigma a` Hurwitz.
///
/// Newton-Kleinman iteration started from a = 0: each step solves one
/// Lyapunov equation with the current closed-loop matrix.  The zero start is
/// stabilizing because `Acal` is required to be Hurwitz.  `Q` may be
/// indefinite.
pub fn solve_are_stabilizing(
    acal: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<AreSolution> {
    solve_are_stabilizing_from(acal, sigma, q, None)
}

/// Same as [`solve_are_stabilizing`] but warm-started from `start` when that
/// guess is itself stabilizing; otherwise the iteration falls back to zero.
pub fn solve_are_stabilizing_from(
    acal: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    q: &DMatrix<f64>,
    start: Option<&DMatrix<f64>>,
) -> Result<AreSolution> {
    let n = acal.nrows();
    if acal.ncols() != n || sigma.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::InvalidArgument(
            "riccati: coefficient shapes do not match".into(),
        ));
    }
    require_hurwitz(acal)?;

    let accept = 1e-10 * (1.0 + q.norm());
    let target = 1e-13 * (1.0 + q.norm());

    let mut a = DMatrix::<f64>::zeros(n, n);
    if let Some(s) = start {
        if s.shape() == (n, n) && is_hurwitz(&(acal + sigma * s)) {
            a = symmetrize(s);
        }
    }

    let mut previous = f64::INFINITY;
    for iteration in 0..ARE_MAX_ITERATIONS {
        let quad = symmetrize(&(&a * sigma * &a));
        let residual_matrix = acal.transpose() * &a + &a * acal + q + &quad;
        let residual = residual_matrix.norm();

        // Quadratic convergence stalls at the rounding floor; accept once the
        // contract tolerance is met and progress has stopped.
        if residual <= target || (residual <= accept && residual >= 0.25 * previous) {
            let closed_loop_abscissa = spectral_abscissa(&(acal + sigma * &a));
            if closed_loop_abscissa >= HURWITZ_MARGIN {
                return Err(Error::StabilizingSolutionLost {
                    iteration,
                    abscissa: closed_loop_abscissa,
                });
            }
            return Ok(AreSolution {
                solution: a,
                iterations: iteration,
                residual,
                closed_loop_abscissa,
            });
        }

        let closed = acal + sigma * &a;
        let abscissa = spectral_abscissa(&closed);
        if abscissa >= HURWITZ_MARGIN {
            return Err(Error::StabilizingSolutionLost {
                iteration,
                abscissa,
            });
        }

        // Newton step: closed^T x + x closed + (Q - a Sigma a) = 0.
        let rhs = q - &quad;
        a = symmetrize(&solve_lyapunov(&closed.transpose(), &rhs)?);
        previous = residual;
    }

    Err(Error::NoConvergence {
        max_iterations: ARE_MAX_ITERATIONS,
        residual: previous,
    })
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues and a unitary
/// eigenvector matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    /// Applies a scalar function on the spectrum: V f(diag) V*.
    pub fn apply<F: Fn(f64) -> Complex<f64>>(&self, f: F) -> CMatrix {
        let fd = CMatrix::from_diagonal(&self.eigenvalues.map(&f));
        &self.eigenvectors * fd * self.eigenvectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply(|x| Complex::new(x, 0.0))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Hermitian eigendecomposition with an asymmetry guard.
pub fn hermitian_eigen(m: &CMatrix) -> Result<SpectralDecomposition> {
    let asymmetry = (m - m.adjoint()).norm();
    let scale = 1.0_f64.max(m.norm());
    if asymmetry > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian {
            residual: asymmetry / scale,
        });
    }
    let h = hermitize(m);
    let eig = SymmetricEigen::try_new(h, 1e-15, 100_000)
        .ok_or_else(|| Error::SolveFailure("Hermitian eigeniteration failed".into()))?;
    Ok(SpectralDecomposition {
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
    })
}

/// Evaluates a scalar function of a Hermitian matrix through its spectral
/// decomposition.
pub fn hermitian_matfun<F: Fn(f64) -> Complex<f64>>(m: &CMatrix, f: F) -> Result<CMatrix> {
    Ok(hermitian_eigen(m)?.apply(f))
}

/// Same as [`hermitian_matfun`] for a real-valued scalar function; the result
/// is re-hermitized since it is Hermitian in exact arithmetic.
pub fn hermitian_matfun_real<F: Fn(f64) -> f64>(m: &CMatrix, f: F) -> Result<CMatrix> {
    let raw = hermitian_matfun(m, |x| Complex::new(f(x), 0.0))?;
    Ok(hermitize(&raw))
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Eigenvalues below `-neg_tol` are rejected; slightly negative ones from
/// rounding are clamped to zero.
pub fn hermitian_sqrt_psd(m: &CMatrix, neg_tol: f64) -> Result<CMatrix> {
    let decomp = hermitian_eigen(m)?;
    let min = decomp.min_eigenvalue();
    if min < -neg_tol {
        return Err(Error::NotPsd { eigenvalue: min });
    }
    Ok(hermitize(
        &decomp.apply(|x| Complex::new(x.max(0.0).sqrt(), 0.0)),
    ))
}
