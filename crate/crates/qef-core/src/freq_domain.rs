//! Frequency-domain rate computations: spectral sampling of the covariance
//! and commutator kernels, the direct log-determinant rate, the homotopy
//! Riccati-ODE rate, the risk-sensitivity thresholds and the spectral
//! density representation.
//!
//! All matrix trigonometry reduces to scalar functions of the Hermitian
//! matrix i Psi(lambda): cos(theta Psi) = cosh on its spectrum,
//! tanc(theta Psi) = tanh(x)/x on its spectrum, and the entire function
//! (e^u - 1)/u is evaluated at 2 theta i Psi.

use nalgebra::DVector;
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::linalg::{
    hermitian_eigen, hermitian_matfun_real, hermitian_sqrt_psd, hermitize, require_hurwitz,
    resolvent, symmetrize, to_complex, CMatrix,
};
use crate::model::OqhoModel;

/// RK4 steps used by the homotopy integrator unless overridden.
pub const DEFAULT_HOMOTOPY_STEPS: usize = 200;

/// Norm bound beyond which the homotopy ODE is declared blown up.
const ODE_NORM_LIMIT: f64 = 1e12;

/// (e^u - 1)/u continued by 1 at the origin.
pub fn phi_entire(u: f64) -> f64 {
    if u.abs() < 1e-5 {
        1.0 + u * (0.5 + u * (1.0 / 6.0 + u / 24.0))
    } else {
        u.exp_m1() / u
    }
}

/// tanh(x)/x continued by 1 at the origin; equals tanc on the imaginary
/// axis, where tan(ix)/(ix) = tanh(x)/x.
pub fn tanhc(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        let x2 = x * x;
        1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0
    } else {
        x.tanh() / x
    }
}

/// Overflow-safe log of cosh.
pub fn ln_cosh(x: f64) -> f64 {
    x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2
}

/// Hermitian covariance spectra Phi(lambda) and skew-Hermitian commutator
/// spectra Psi(lambda) on a frequency grid.
#[derive(Debug, Clone)]
pub struct SpectralSamples {
    pub phi: Vec<CMatrix>,
    pub psi: Vec<CMatrix>,
}

/// Samples Phi = E B B^T E^* and Psi = E mho E^* with E = (i lambda - A)^{-1}
/// at every grid node.  Hermitian and skew-Hermitian structure is enforced
/// exactly.
pub fn spectral_samples(model: &OqhoModel, grid: &FrequencyGrid) -> Result<SpectralSamples> {
    require_hurwitz(model.a())?;
    let bbt = to_complex(&symmetrize(&(model.b() * model.b().transpose())));
    let mho = to_complex(&model.mho());
    let a = model.a();

    let pairs: Result<Vec<(CMatrix, CMatrix)>> = grid
        .nodes()
        .par_iter()
        .map(|&lambda| {
            let e = resolvent(a, lambda)?;
            let e_adj = e.adjoint();
            let phi = hermitize(&(&e * &bbt * &e_adj));
            let psi_raw = &e * &mho * &e_adj;
            let psi = (&psi_raw - psi_raw.adjoint()) * Complex::new(0.5, 0.0);
            Ok((phi, psi))
        })
        .collect();
    let (phi, psi) = pairs?.into_iter().unzip();
    Ok(SpectralSamples { phi, psi })
}

/// Per-node spectral data reused across repeated theta evaluations: the
/// eigendecomposition of the Hermitian matrix K = i Psi and the square root
/// of Phi.
struct NodeFunctions {
    k_eigs: DVector<f64>,
    k_vecs: CMatrix,
    sqrt_phi: CMatrix,
}

fn node_functions(samples: &SpectralSamples) -> Result<Vec<NodeFunctions>> {
    samples
        .phi
        .par_iter()
        .zip(samples.psi.par_iter())
        .map(|(phi, psi)| {
            let k = psi * Complex::new(0.0, 1.0);
            let decomp = hermitian_eigen(&k)?;
            let sqrt_phi = hermitian_sqrt_psd(phi, 1e-10 * (1.0 + phi.norm()))?;
            Ok(NodeFunctions {
                k_eigs: decomp.eigenvalues,
                k_vecs: decomp.eigenvectors,
                sqrt_phi,
            })
        })
        .collect()
}

impl NodeFunctions {
    /// sqrt(Phi) tanc(theta Psi) sqrt(Phi), the symmetrized Hermitian form
    /// whose largest eigenvalue drives the validity condition.
    fn symmetrized_tanc(&self, theta: f64) -> CMatrix {
        let tan_diag = CMatrix::from_diagonal(
            &self
                .k_eigs
                .map(|mu| Complex::new(tanhc(theta * mu), 0.0)),
        );
        let tanc = &self.k_vecs * tan_diag * self.k_vecs.adjoint();
        hermitize(&(&self.sqrt_phi * tanc * &self.sqrt_phi))
    }

    fn max_tanc_eigenvalue(&self, theta: f64) -> Result<f64> {
        Ok(hermitian_eigen(&self.symmetrized_tanc(theta))?.max_eigenvalue())
    }

    /// ln det cos(theta Psi) + ln det(I - theta sqrt(Phi) tanc sqrt(Phi)),
    /// the stabilized integrand of the rate representation.
    fn log_det_integrand(&self, theta: f64) -> Result<f64> {
        let ln_det_cos: f64 = self.k_eigs.iter().map(|mu| ln_cosh(theta * mu)).sum();
        let core = CMatrix::identity(self.sqrt_phi.nrows(), self.sqrt_phi.ncols())
            - self.symmetrized_tanc(theta) * Complex::new(theta, 0.0);
        let eigs = hermitian_eigen(&core)?.eigenvalues;
        let mut ln_det_core = 0.0;
        for d in eigs.iter() {
            if *d <= 0.0 {
                return Err(Error::ThetaBeyondThreshold { theta });
            }
            ln_det_core += d.ln();
        }
        Ok(ln_det_cos + ln_det_core)
    }
}

/// QEF growth rate by direct quadrature of the stabilized log-determinant
/// representation.  Fails with `ThetaBeyondThreshold` as soon as any node
/// loses positive definiteness, which is exactly the validity condition of
/// the representation.
pub fn qef_rate_direct(model: &OqhoModel, theta: f64, grid: &FrequencyGrid) -> Result<f64> {
    if theta < 0.0 {
        return Err(Error::InvalidArgument(
            "risk sensitivity must be nonnegative".into(),
        ));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let samples = spectral_samples(model, grid)?;
    let funcs = node_functions(&samples)?;
    qef_rate_direct_from(&funcs, theta, grid)
}

fn qef_rate_direct_from(funcs: &[NodeFunctions], theta: f64, grid: &FrequencyGrid) -> Result<f64> {
    let values: Result<Vec<f64>> = funcs
        .par_iter()
        .map(|f| f.log_det_integrand(theta))
        .collect();
    Ok(-grid.integrate(&values?) / (4.0 * std::f64::consts::PI))
}

/// QEF growth rate through the homotopy in theta: each node carries the
/// Riccati ODE U' = Psi^2 + U^2 from U = Phi, and the rate accumulates the
/// weighted trace of U along the way.  Fixed-step RK4.
pub fn qef_rate_homotopy(
    model: &OqhoModel,
    theta: f64,
    grid: &FrequencyGrid,
    theta_steps: usize,
) -> Result<f64> {
    if theta < 0.0 {
        return Err(Error::InvalidArgument(
            "risk sensitivity must be nonnegative".into(),
        ));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    if theta_steps == 0 {
        return Err(Error::InvalidArgument("need at least one theta step".into()));
    }
    let samples = spectral_samples(model, grid)?;
    let h = theta / theta_steps as f64;

    let traces: Result<Vec<f64>> = samples
        .phi
        .par_iter()
        .zip(samples.psi.par_iter())
        .map(|(phi, psi)| {
            let psi_sq = psi * psi;
            let f = |u: &CMatrix| &psi_sq + u * u;
            let trace = |u: &CMatrix| u.trace().re;

            let mut u = phi.clone();
            let mut t = 0.0;
            for step in 0..theta_steps {
                let k1 = f(&u);
                let t1 = trace(&u);
                let u2 = &u + &k1 * Complex::new(h / 2.0, 0.0);
                let k2 = f(&u2);
                let t2 = trace(&u2);
                let u3 = &u + &k2 * Complex::new(h / 2.0, 0.0);
                let k3 = f(&u3);
                let t3 = trace(&u3);
                let u4 = &u + &k3 * Complex::new(h, 0.0);
                let k4 = f(&u4);
                let t4 = trace(&u4);
                let two = Complex::new(2.0, 0.0);
                u = hermitize(
                    &(&u + (k1 + k2 * two + k3 * two + k4) * Complex::new(h / 6.0, 0.0)),
                );
                t += h / 6.0 * (t1 + 2.0 * t2 + 2.0 * t3 + t4);
                let norm = u.norm();
                if !norm.is_finite() || norm > ODE_NORM_LIMIT {
                    return Err(Error::OdeBlowup {
                        theta: (step + 1) as f64 * h,
                        norm,
                    });
                }
            }
            Ok(t)
        })
        .collect();
    Ok(grid.integrate(&traces?) / (4.0 * std::f64::consts::PI))
}

/// Validity margin g(theta) = theta sup_lambda lmax(sqrt(Phi) tanc(theta Psi)
/// sqrt(Phi)) over the grid.
fn validity_margin(funcs: &[NodeFunctions], theta: f64) -> Result<f64> {
    let sups: Result<Vec<f64>> = funcs
        .par_iter()
        .map(|f| f.max_tanc_eigenvalue(theta))
        .collect();
    Ok(theta * sups?.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Risk-sensitivity threshold: the value of theta at which the validity
/// margin reaches one.  Bisection to absolute tolerance 1e-5 with a
/// geometrically expanded bracket; returns infinity when the margin never
/// reaches one.  A coarse monotonicity scan guards the bisection and falls
/// back to a fine first-crossing search if the margin is found to dip.
pub fn theta_star(model: &OqhoModel, grid: &FrequencyGrid) -> Result<f64> {
    let samples = spectral_samples(model, grid)?;
    let funcs = node_functions(&samples)?;

    let mut phi_sup: f64 = 0.0;
    for phi in &samples.phi {
        phi_sup = phi_sup.max(hermitian_eigen(phi)?.max_eigenvalue());
    }
    if phi_sup <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let theta0 = 1.0 / phi_sup;

    let mut hi = 4.0 * theta0;
    let cap = 1e9 * theta0;
    while validity_margin(&funcs, hi)? < 1.0 {
        hi *= 2.0;
        if hi > cap {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-5 {
        let mid = 0.5 * (lo + hi);
        if validity_margin(&funcs, mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let star = 0.5 * (lo + hi);

    // The margin is expected to grow with theta; scan a few checkpoints and
    // fall back to a first-crossing search if that fails.
    let checks = 16;
    let monotone = (1..checks).all(|i| {
        validity_margin(&funcs, star * i as f64 / checks as f64)
            .map(|g| g < 1.0)
            .unwrap_or(false)
    });
    if monotone {
        return Ok(star);
    }
    let fine = 4096;
    for i in 1..=fine {
        let theta = star * i as f64 / fine as f64;
        if validity_margin(&funcs, theta)? >= 1.0 {
            return Ok(theta);
        }
    }
    Ok(star)
}

/// Classical threshold 1 / sup_lambda lmax(Phi(lambda)): grid maximum
/// refined by a golden-section search of the true spectral-norm curve
/// around the best node.
pub fn theta_zero(model: &OqhoModel, grid: &FrequencyGrid) -> Result<f64> {
    require_hurwitz(model.a())?;
    let samples = spectral_samples(model, grid)?;
    let lmax: Result<Vec<f64>> = samples
        .phi
        .par_iter()
        .map(|phi| Ok(hermitian_eigen(phi)?.max_eigenvalue()))
        .collect();
    let lmax = lmax?;
    let (best, _) = lmax
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("grid is nonempty");

    let nodes = grid.nodes();
    let lo = nodes[best.saturating_sub(1)];
    let hi = nodes[(best + 1).min(nodes.len() - 1)];
    let bbt = to_complex(&symmetrize(&(model.b() * model.b().transpose())));
    let phi_norm = |lambda: f64| -> Result<f64> {
        let e = resolvent(model.a(), lambda)?;
        let phi = hermitize(&(&e * &bbt * e.adjoint()));
        Ok(hermitian_eigen(&phi)?.max_eigenvalue())
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = phi_norm(x1)?;
    let mut f2 = phi_norm(x2)?;
    for _ in 0..80 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = phi_norm(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = phi_norm(x1)?;
        }
    }
    let sup = f1.max(f2);
    Ok(1.0 / sup)
}

/// Spectral density Delta_theta(lambda) = S E^* phi(2 i theta Psi) E S,
/// a Hermitian positive semidefinite matrix.
pub fn delta_spectral(model: &OqhoModel, theta: f64, lambda: f64) -> Result<CMatrix> {
    require_hurwitz(model.a())?;
    let e = resolvent(model.a(), lambda)?;
    let mho = to_complex(&model.mho());
    let psi_raw = &e * &mho * e.adjoint();
    let psi = (&psi_raw - psi_raw.adjoint()) * Complex::new(0.5, 0.0);
    // 2 i theta Psi = 2 theta K with K = i Psi Hermitian.
    let arg = psi * Complex::new(0.0, 2.0 * theta);
    let phi_mat = hermitian_matfun_real(&arg, phi_entire)?;
    let s = crate::cascade::bob_sqrt(model)?;
    Ok(hermitize(&(&s * e.adjoint() * phi_mat * &e * &s)))
}
