//! Open quantum harmonic oscillator model: construction from energy and
//! coupling matrices, physical-realizability diagnostics, coordinate
//! transforms and the time-domain covariance kernels of the invariant state.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    antisymmetrize, condition_number, require_hurwitz, solve_lyapunov, spectral_abscissa,
    symmetrize,
};

/// 2x2 symplectic unit [[0, 1], [-1, 0]].
pub fn bmat2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

/// Commutation matrix J = bmat2 (x) I_{m/2} of an m-channel field.
pub fn field_commutation_matrix(m: usize) -> DMatrix<f64> {
    assert!(m >= 2 && m % 2 == 0, "field dimension must be even");
    bmat2().kronecker(&DMatrix::identity(m / 2, m / 2))
}

/// Linear quantum stochastic system with `n` system variables driven by an
/// `m`-channel bosonic field.
///
/// The state-space data consists of the CCR matrix `Theta` (real
/// antisymmetric, nonsingular), the drift matrix `A` and the input matrix
/// `B`.  The output matrix `C`, energy matrix `R` and coupling matrix `M`
/// are optional: the rate computations depend only on (Theta, A, B).
#[derive(Debug, Clone)]
pub struct OqhoModel {
    n: usize,
    m: usize,
    theta: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: Option<DMatrix<f64>>,
    r: Option<DMatrix<f64>>,
    coupling: Option<DMatrix<f64>>,
}

/// Scalar health report for a model; thresholds are the caller's business.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDiagnostics {
    /// Frobenius norm of A Theta + Theta A^T + mho.
    pub pr1_residual: f64,
    /// Frobenius norm of Theta C^T + B J (zero when C is absent, since C is
    /// then defined implicitly by that identity).
    pub pr2_residual: f64,
    /// Largest real part over the spectrum of A.
    pub spectral_abscissa: f64,
    /// Condition number of mho = B J B^T.
    pub mho_condition: f64,
    /// Smallest eigenvalue of B B^T.
    pub bbt_min_eigenvalue: f64,
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

impl OqhoModel {
    /// Builds a model from raw state-space data, checking shapes, parity and
    /// the CCR matrix structure.  Stability and realizability residuals are
    /// reported by [`OqhoModel::validate`], not enforced here.
    pub fn from_parts(
        theta: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: Option<DMatrix<f64>>,
        r: Option<DMatrix<f64>>,
        coupling: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = theta.nrows();
        if theta.ncols() != n {
            return Err(Error::InvalidModel("Theta must be square".into()));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidModel(format!(
                "number of system variables must be even and positive, got {n}"
            )));
        }
        if a.shape() != (n, n) {
            return Err(Error::InvalidModel(format!(
                "A must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let m = b.ncols();
        if b.nrows() != n {
            return Err(Error::InvalidModel(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidModel(format!(
                "number of field channels must be even and positive, got {m}"
            )));
        }
        if n > m {
            return Err(Error::InvalidModel(format!(
                "more system variables ({n}) than field channels ({m})"
            )));
        }
        if let Some(cm) = &c {
            if cm.shape() != (m, n) {
                return Err(Error::InvalidModel(format!(
                    "C must be {m}x{n}, got {}x{}",
                    cm.nrows(),
                    cm.ncols()
                )));
            }
        }
        if let Some(rm) = &r {
            if rm.shape() != (n, n) {
                return Err(Error::InvalidModel("R must be n x n".into()));
            }
        }
        if let Some(mm) = &coupling {
            if mm.shape() != (m, n) {
                return Err(Error::InvalidModel("M must be m x n".into()));
            }
        }

        let asym = (&theta + theta.transpose()).norm();
        if asym > 1e-10 * (1.0 + theta.norm()) {
            return Err(Error::InvalidModel(format!(
                "Theta is not antisymmetric (residual {asym:.3e})"
            )));
        }
        let theta = antisymmetrize(&theta);
        if condition_number(&theta) > 1e12 {
            return Err(Error::InvalidModel("CCR matrix Theta is singular".into()));
        }

        Ok(Self {
            n,
            m,
            theta,
            a,
            b,
            c,
            r,
            coupling,
        })
    }

    /// Constructs the state-space matrices from the energy matrix `R` and
    /// coupling matrix `M`:
    ///
    ///   A = 2 Theta (R + M^T J M),  B = 2 Theta M^T,  C = 2 J M.
    ///
    /// The realizability identities hold by construction.  Models whose
    /// drift matrix is unstable are rejected; use
    /// [`OqhoModel::build_from_energy_unchecked`] to inspect them anyway.
    pub fn build_from_energy(
        theta: DMatrix<f64>,
        r: DMatrix<f64>,
        coupling: DMatrix<f64>,
    ) -> Result<Self> {
        let model = Self::build_from_energy_unchecked(theta, r, coupling)?;
        require_hurwitz(&model.a)?;
        Ok(model)
    }

    /// Same as [`OqhoModel::build_from_energy`] without the stability check.
    pub fn build_from_energy_unchecked(
        theta: DMatrix<f64>,
        r: DMatrix<f64>,
        coupling: DMatrix<f64>,
    ) -> Result<Self> {
        let n = theta.nrows();
        let m = coupling.nrows();
        if coupling.ncols() != n || r.shape() != (n, n) {
            return Err(Error::InvalidModel(
                "energy/coupling matrix shapes are inconsistent with Theta".into(),
            ));
        }
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidModel(
                "coupling matrix must have an even number of rows".into(),
            ));
        }
        let j = field_commutation_matrix(m);
        let r = symmetrize(&r);
        let a = &theta * (&r + coupling.transpose() * &j * &coupling) * 2.0;
        let b = &theta * coupling.transpose() * 2.0;
        let c = &j * &coupling * 2.0;
        Self::from_parts(theta, a, b, Some(c), Some(r), Some(coupling))
    }

    /// The two-mode oscillator used as the bundled benchmark: four system
    /// variables, a six-channel input field, entries quoted to four decimal
    /// places.  Its realizability residual is of order 1e-2 in absolute
    /// terms because of the rounding in the printed data.
    pub fn two_mode_example() -> Self {
        let theta = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.8697, -0.2444, 0.4872, //
                -0.8697, 0.0, 0.2612, -2.0179, //
                0.2444, -0.2612, 0.0, 1.1388, //
                -0.4872, 2.0179, -1.1388, 0.0,
            ],
        );
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                5.1304, 5.7928, 8.7655, -1.5445, //
                -9.0634, -9.0965, -14.7367, 0.6865, //
                0.6371, 0.1820, -0.6069, 0.4491, //
                13.5996, 5.4816, 5.8039, -3.6400,
            ],
        );
        let b = DMatrix::from_row_slice(
            4,
            6,
            &[
                3.0301, 0.1179, 1.9804, -0.8723, 0.9541, 0.9578, //
                -2.1858, -2.0488, -2.0902, 1.0467, 1.7361, -0.2561, //
                -1.8423, 0.7662, -0.4926, 0.1977, -0.6104, -0.6082, //
                -3.3994, -3.6233, -2.0884, -1.5410, 3.6763, -0.3150,
            ],
        );
        Self::from_parts(theta, a, b, None, None, None)
            .expect("bundled example model is structurally valid")
    }

    /// Draws a physically realizable stable model from a seeded generator.
    ///
    /// Theta is the canonical (1/2) bmat2 (x) I conjugated by a random
    /// well-conditioned matrix; R and M are resampled until the drift matrix
    /// has spectral abscissa at or below `-stability_margin` and mho is
    /// nonsingular.  Identical seeds give identical models.
    pub fn random_pr_model(
        n: usize,
        m: usize,
        seed: u64,
        stability_margin: f64,
    ) -> Result<Self> {
        if n < 2 || n % 2 != 0 || m < 2 || m % 2 != 0 {
            return Err(Error::InvalidArgument(
                "system and field dimensions must be even and positive".into(),
            ));
        }
        if n > m {
            return Err(Error::InvalidArgument(
                "need at least as many field channels as system variables".into(),
            ));
        }
        if stability_margin <= 0.0 || stability_margin.is_nan() {
            return Err(Error::InvalidArgument(
                "stability margin must be positive".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let canonical = bmat2().kronecker(&DMatrix::identity(n / 2, n / 2)) * 0.5;
        const ATTEMPTS: usize = 500;

        for _ in 0..ATTEMPTS {
            let sigma = DMatrix::identity(n, n)
                + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
            if condition_number(&sigma) > 30.0 {
                continue;
            }
            let theta = antisymmetrize(&(&sigma * &canonical * sigma.transpose()));
            let r = symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.7..0.7)));
            let coupling = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));

            let model = match Self::build_from_energy_unchecked(theta, r, coupling) {
                Ok(model) => model,
                Err(_) => continue,
            };
            if spectral_abscissa(&model.a) > -stability_margin {
                continue;
            }
            if condition_number(&model.mho()) > 1e10 {
                continue;
            }
            let bbt_min = min_symmetric_eigenvalue(&(&model.b * model.b.transpose()));
            if bbt_min <= 1e-8 * (1.0 + model.b.norm_squared()) {
                continue;
            }
            return Ok(model);
        }
        Err(Error::GenerationFailure { attempts: ATTEMPTS })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> Option<&DMatrix<f64>> {
        self.c.as_ref()
    }

    pub fn energy(&self) -> Option<&DMatrix<f64>> {
        self.r.as_ref()
    }

    pub fn coupling(&self) -> Option<&DMatrix<f64>> {
        self.coupling.as_ref()
    }

    /// Commutation matrix of the driving field.
    pub fn j_matrix(&self) -> DMatrix<f64> {
        field_commutation_matrix(self.m)
    }

    /// mho = B J B^T, antisymmetric by construction; the antisymmetry is
    /// enforced exactly.
    pub fn mho(&self) -> DMatrix<f64> {
        antisymmetrize(&(&self.b * self.j_matrix() * self.b.transpose()))
    }

    /// Realizability residuals and stability/conditioning numbers.
    pub fn validate(&self) -> ModelDiagnostics {
        let mho = self.mho();
        let pr1_residual = (&self.a * &self.theta + &self.theta * self.a.transpose() + &mho).norm();
        let pr2_residual = match &self.c {
            Some(c) => {
                (&self.theta * c.transpose() + &self.b * self.j_matrix()).norm()
            }
            None => 0.0,
        };
        ModelDiagnostics {
            pr1_residual,
            pr2_residual,
            spectral_abscissa: spectral_abscissa(&self.a),
            mho_condition: condition_number(&mho),
            bbt_min_eigenvalue: min_symmetric_eigenvalue(&(&self.b * self.b.transpose())),
        }
    }

    /// Scale on which realizability residuals should be judged.
    pub fn pr_scale(&self) -> f64 {
        1.0 + self.a.norm() * self.theta.norm()
    }

    /// Controllability Gramian of (A, B): the solution of
    /// A Gamma + Gamma A^T + B B^T = 0.
    pub fn gramian(&self) -> Result<DMatrix<f64>> {
        let bbt = symmetrize(&(&self.b * self.b.transpose()));
        Ok(symmetrize(&solve_lyapunov(&self.a, &bbt)?))
    }

    /// Two-point kernels (P(tau), Lambda(tau)) of the invariant state.
    ///
    /// P(tau) = e^{tau A} Gamma and Lambda(tau) = e^{tau A} Theta for
    /// tau >= 0; negative lags follow from P(-tau) = P(tau)^T and
    /// Lambda(-tau) = -Lambda(tau)^T.
    pub fn two_point_kernels(&self, tau: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        require_hurwitz(&self.a)?;
        let gamma = self.gramian()?;
        let propagator = (&self.a * tau.abs()).exp();
        let p_pos = &propagator * &gamma;
        let lambda_pos = &propagator * &self.theta;
        if tau >= 0.0 {
            Ok((p_pos, lambda_pos))
        } else {
            Ok((p_pos.transpose(), -lambda_pos.transpose()))
        }
    }

    /// Change of variables X -> sigma X.  Theta -> sigma Theta sigma^T,
    /// A -> sigma A sigma^{-1}, B -> sigma B, C -> C sigma^{-1}, and the
    /// optional energy/coupling matrices transform contragrediently.
    pub fn coordinate_transform(&self, sigma: &DMatrix<f64>) -> Result<Self> {
        if sigma.shape() != (self.n, self.n) {
            return Err(Error::InvalidArgument("transform must be n x n".into()));
        }
        if condition_number(sigma) > 1e12 {
            return Err(Error::SingularTransform);
        }
        let lu = sigma.clone().lu();
        let inv = lu.try_inverse().ok_or(Error::SingularTransform)?;

        let theta = antisymmetrize(&(sigma * &self.theta * sigma.transpose()));
        let a = sigma * &self.a * &inv;
        let b = sigma * &self.b;
        let c = self.c.as_ref().map(|c| c * &inv);
        let r = self
            .r
            .as_ref()
            .map(|r| symmetrize(&(inv.transpose() * r * &inv)));
        let coupling = self.coupling.as_ref().map(|m| m * &inv);
        Self::from_parts(theta, a, b, c, r, coupling)
    }
}

/// On-disk JSON layout: integer dimensions plus row-major nested arrays.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    m: usize,
    #[serde(rename = "Theta")]
    theta: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    coupling: Option<Vec<Vec<f64>>>,
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "field {name} must be a {nrows}x{ncols} row-major array"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl OqhoModel {
    /// Parses the JSON model format.  Shape mismatches and odd dimensions
    /// are parse errors; structural CCR defects surface as model errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let (n, m) = (file.n, file.m);
        if n == 0 || n % 2 != 0 || m == 0 || m % 2 != 0 {
            return Err(Error::Parse(format!(
                "dimensions must be even and positive, got n = {n}, m = {m}"
            )));
        }
        let theta = rows_to_matrix("Theta", &file.theta, n, n)?;
        let a = rows_to_matrix("A", &file.a, n, n)?;
        let b = rows_to_matrix("B", &file.b, n, m)?;
        let c = file
            .c
            .as_deref()
            .map(|rows| rows_to_matrix("C", rows, m, n))
            .transpose()?;
        let r = file
            .r
            .as_deref()
            .map(|rows| rows_to_matrix("R", rows, n, n))
            .transpose()?;
        let coupling = file
            .coupling
            .as_deref()
            .map(|rows| rows_to_matrix("M", rows, m, n))
            .transpose()?;
        Self::from_parts(theta, a, b, c, r, coupling)
    }

    /// Serializes to the JSON model format with round-trip-exact floats.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            n: self.n,
            m: self.m,
            theta: matrix_to_rows(&self.theta),
            a: matrix_to_rows(&self.a),
            b: matrix_to_rows(&self.b),
            c: self.c.as_ref().map(matrix_to_rows),
            r: self.r.as_ref().map(matrix_to_rows),
            coupling: self.coupling.as_ref().map(matrix_to_rows),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_energy_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Option<OqhoModel> {
        let canonical = bmat2().kronecker(&DMatrix::identity(n / 2, n / 2)) * 0.5;
        let sigma =
            DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
        let theta = antisymmetrize(&(&sigma * &canonical * sigma.transpose()));
        let r = symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.7..0.7)));
        let coupling = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        OqhoModel::build_from_energy_unchecked(theta, r, coupling).ok()
    }

    #[test]
    fn zero_energy_model_is_rejected_as_unstable() {
        let theta = bmat2() * 0.5;
        let r = DMatrix::zeros(2, 2);
        let m = DMatrix::zeros(2, 2);
        let err = OqhoModel::build_from_energy(theta.clone(), r.clone(), m.clone()).unwrap_err();
        assert!(matches!(err, Error::NotHurwitz { .. }));
        // The unchecked path still exposes the degenerate matrices.
        let model = OqhoModel::build_from_energy_unchecked(theta, r, m).unwrap();
        assert!(model.a().norm() == 0.0 && model.b().norm() == 0.0);
    }

    #[test]
    fn energy_construction_satisfies_pr_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 100 {
            let Some(model) = random_energy_model(&mut rng, 4, 6) else {
                continue;
            };
            let d = model.validate();
            assert!(
                d.pr1_residual <= 1e-12 * model.pr_scale(),
                "pr1 residual {:.3e}",
                d.pr1_residual
            );
            assert!(
                d.pr2_residual <= 1e-12 * model.pr_scale(),
                "pr2 residual {:.3e}",
                d.pr2_residual
            );
            checked += 1;
        }
    }

    #[test]
    fn random_pr_model_is_deterministic_and_valid() {
        let a = OqhoModel::random_pr_model(2, 2, 1, 0.05).unwrap();
        let b = OqhoModel::random_pr_model(2, 2, 1, 0.05).unwrap();
        assert_eq!(a.a(), b.a());
        let d = a.validate();
        assert!(d.pr1_residual <= 1e-10 * a.pr_scale());
        assert!(d.spectral_abscissa <= -0.05);

        let c = OqhoModel::random_pr_model(4, 6, 7, 0.05).unwrap();
        assert!(c.n() <= c.m());
        assert!(c.validate().mho_condition < 1e10);
    }

    #[test]
    fn gramian_is_positive_semidefinite_on_random_models() {
        for seed in 0..8 {
            let Ok(model) = OqhoModel::random_pr_model(4, 6, 300 + seed, 0.05) else {
                continue;
            };
            let gamma = model.gramian().unwrap();
            let min = min_symmetric_eigenvalue(&gamma);
            assert!(min >= -1e-12 * (1.0 + gamma.norm()), "min eig {min:.3e}");
            // Full-rank input makes it strictly positive definite.
            if model.validate().bbt_min_eigenvalue > 1e-8 {
                assert!(min > 0.0);
            }
        }
    }

    #[test]
    fn absurd_stability_margin_fails_generation() {
        assert!(matches!(
            OqhoModel::random_pr_model(2, 4, 3, 1e3),
            Err(Error::GenerationFailure { .. })
        ));
    }

    #[test]
    fn example_model_matches_reported_spectrum() {
        let model = OqhoModel::two_mode_example();
        let d = model.validate();
        assert_abs_diff_eq!(d.spectral_abscissa, -1.3480, epsilon = 1e-3);
        // Printed to four decimals, so realizability holds only approximately.
        let scale = (model.a() * model.theta()).norm();
        assert!(d.pr1_residual <= 1e-3 * scale, "pr1 = {:.3e}", d.pr1_residual);
        assert!(d.pr1_residual > 0.0);
        assert!(d.mho_condition.is_finite());
        assert!(d.bbt_min_eigenvalue > 0.0);
    }

    #[test]
    fn mho_is_exactly_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let model = OqhoModel::random_pr_model(4, 6, 31, 0.02).unwrap();
        let mho = model.mho();
        assert!((&mho + mho.transpose()).norm() == 0.0);
        // Zero input matrix gives zero mho.
        let zb = OqhoModel::from_parts(
            model.theta().clone(),
            model.a().clone(),
            DMatrix::zeros(4, 6),
            None,
            None,
            None,
        )
        .unwrap();
        assert!(zb.mho().norm() == 0.0);
        let _ = &mut rng;
    }

    #[test]
    fn bbt_degeneracy_is_reported() {
        // Rows of B lie in a 3-dimensional subspace, so B B^T is singular.
        let model = OqhoModel::two_mode_example();
        let mut b = model.b().clone();
        let row = b.row(0).clone_owned();
        b.set_row(3, &row);
        let degenerate =
            OqhoModel::from_parts(model.theta().clone(), model.a().clone(), b, None, None, None)
                .unwrap();
        assert!(degenerate.validate().bbt_min_eigenvalue <= 1e-10);
    }

    #[test]
    fn identity_transform_is_a_no_op() {
        let model = OqhoModel::two_mode_example();
        let t = model.coordinate_transform(&DMatrix::identity(4, 4)).unwrap();
        assert!((t.a() - model.a()).norm() <= 1e-14);
        assert!((t.theta() - model.theta()).norm() <= 1e-14);
        assert!((t.b() - model.b()).norm() <= 1e-14);
    }

    #[test]
    fn scalar_transform_scales_fields() {
        let model = OqhoModel::two_mode_example();
        let t = model
            .coordinate_transform(&(DMatrix::identity(4, 4) * 2.0))
            .unwrap();
        assert!((t.theta() - model.theta() * 4.0).norm() <= 1e-12);
        assert!((t.a() - model.a()).norm() <= 1e-12);
        assert!((t.b() - model.b() * 2.0).norm() <= 1e-12);
    }

    #[test]
    fn random_transform_preserves_realizability() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let model = OqhoModel::random_pr_model(4, 4, 11, 0.02).unwrap();
        for _ in 0..5 {
            let sigma = DMatrix::identity(4, 4)
                + DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-0.4..0.4));
            let cond = condition_number(&sigma);
            let t = model.coordinate_transform(&sigma).unwrap();
            let d = t.validate();
            assert!(
                d.pr1_residual <= 1e-8 * cond * cond * t.pr_scale(),
                "pr1 residual {:.3e} after transform with condition {cond:.2e}",
                d.pr1_residual
            );
        }
    }

    #[test]
    fn singular_transform_is_rejected() {
        let model = OqhoModel::two_mode_example();
        let singular = DMatrix::zeros(4, 4);
        assert!(matches!(
            model.coordinate_transform(&singular),
            Err(Error::SingularTransform)
        ));
    }

    #[test]
    fn gramian_scalar_cases() {
        // A = [-1], B = [sqrt 2]: -2 Gamma + 2 = 0.
        let model = OqhoModel::from_parts(
            bmat2() * 0.5,
            DMatrix::identity(2, 2) * -1.0,
            DMatrix::from_row_slice(2, 2, &[2f64.sqrt(), 0.0, 0.0, 2f64.sqrt()]),
            None,
            None,
            None,
        )
        .unwrap();
        let gamma = model.gramian().unwrap();
        assert!((gamma - DMatrix::identity(2, 2)).norm() <= 1e-12);

        let zero_b = OqhoModel::from_parts(
            bmat2() * 0.5,
            DMatrix::identity(2, 2) * -1.0,
            DMatrix::zeros(2, 2),
            None,
            None,
            None,
        )
        .unwrap();
        assert!(zero_b.gramian().unwrap().norm() <= 1e-14);
    }

    #[test]
    fn example_gramian_is_positive_definite() {
        let model = OqhoModel::two_mode_example();
        let gamma = model.gramian().unwrap();
        let bbt = model.b() * model.b().transpose();
        let residual = (model.a() * &gamma + &gamma * model.a().transpose() + &bbt).norm();
        assert!(residual <= 1e-10 * (1.0 + bbt.norm()));
        assert!(min_symmetric_eigenvalue(&gamma) > 0.0);
    }

    #[test]
    fn kernels_at_zero_lag_and_decay() {
        let model = OqhoModel::two_mode_example();
        let gamma = model.gramian().unwrap();
        let (p0, l0) = model.two_point_kernels(0.0).unwrap();
        assert!((p0 - gamma).norm() <= 1e-12);
        assert!((l0 - model.theta()).norm() <= 1e-14);
        let (p, l) = model.two_point_kernels(50.0).unwrap();
        assert!(p.norm() <= 1e-10 && l.norm() <= 1e-10);
    }

    #[test]
    fn kernel_against_ode_integration_oracle() {
        // Integrate Xdot = A X from X(0) = Gamma with fine fixed-step RK4.
        let model = OqhoModel::two_mode_example();
        let gamma = model.gramian().unwrap();
        let a = model.a();
        let tau = 0.3;
        let steps = 4000;
        let h = tau / steps as f64;
        let mut x = gamma.clone();
        for _ in 0..steps {
            let k1 = a * &x;
            let k2 = a * (&x + &k1 * (h / 2.0));
            let k3 = a * (&x + &k2 * (h / 2.0));
            let k4 = a * (&x + &k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let (p, _) = model.two_point_kernels(tau).unwrap();
        assert!((p - &x).norm() <= 1e-8 * (1.0 + x.norm()));
    }

    #[test]
    fn kernel_symmetries_at_random_lags() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = OqhoModel::two_mode_example();
        for _ in 0..20 {
            let tau: f64 = rng.gen_range(-2.0..2.0);
            let (p_pos, l_pos) = model.two_point_kernels(tau).unwrap();
            let (p_neg, l_neg) = model.two_point_kernels(-tau).unwrap();
            assert!((p_neg - p_pos.transpose()).norm() <= 1e-12);
            assert!((l_neg + l_pos.transpose()).norm() <= 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let model = OqhoModel::two_mode_example();
        let text = model.to_json();
        let parsed = OqhoModel::from_json(&text).unwrap();
        assert_eq!(model.theta(), parsed.theta());
        assert_eq!(model.a(), parsed.a());
        assert_eq!(model.b(), parsed.b());
        assert_eq!(parsed.to_json(), text);
    }

    #[test]
    fn json_rejects_bad_shapes_and_odd_dimensions() {
        let odd = r#"{"n": 3, "m": 4, "Theta": [], "A": [], "B": []}"#;
        assert!(matches!(OqhoModel::from_json(odd), Err(Error::Parse(_))));
        let mismatched = r#"{"n": 2, "m": 2,
            "Theta": [[0.0, 0.5], [-0.5, 0.0]],
            "A": [[-1.0, 0.0], [0.0, -1.0]],
            "B": [[1.0], [0.0]]}"#;
        assert!(matches!(
            OqhoModel::from_json(mismatched),
            Err(Error::Parse(_))
        ));
    }
}
