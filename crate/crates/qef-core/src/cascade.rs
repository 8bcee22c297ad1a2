//! Cascade factorization machinery: the recurrent Lyapunov-equation scheme
//! producing the (alpha, beta, gamma) matrix sequences, scalar coefficient
//! schemes for the entire function (e^u - 1)/u, assembly of the truncated
//! shaping filter and its block-diagonal weight matrix, and numeric checks
//! of the transposition and ordered-product factorization identities.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{
    condition_number, hermitian_sqrt_psd, require_hurwitz, resolvent, solve_lyapunov, symmetrize,
    to_complex, CMatrix,
};
use crate::model::OqhoModel;

/// Condition number of a gamma matrix above which the recursion is declared
/// numerically singular.
pub const GAMMA_CONDITION_LIMIT: f64 = 1e12;

/// Taylor coefficients 1/(k+1)! of (e^u - 1)/u, for k = 0..=kmax.
pub fn phi_taylor_coeffs(kmax: usize) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(kmax + 1);
    let mut value = 1.0;
    coeffs.push(value);
    for k in 1..=kmax {
        value /= (k + 1) as f64;
        coeffs.push(value);
    }
    coeffs
}

/// Taylor coefficients of the positive square root of (e^u - 1)/u, from the
/// convolution recurrence psi_k = (phi_k - sum_{j=1}^{k-1} psi_j psi_{k-j})/2.
pub fn psi_coeffs(kmax: usize) -> Vec<f64> {
    let phi = phi_taylor_coeffs(kmax);
    let mut psi = Vec::with_capacity(kmax + 1);
    psi.push(1.0);
    for k in 1..=kmax {
        let mut cross = 0.0;
        for j in 1..k {
            cross += psi[j] * psi[k - j];
        }
        psi.push(0.5 * (phi[k] - cross));
    }
    psi
}

/// Which polynomial stands in for the entire function in the truncated
/// weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Truncated Taylor series: weights 1/(k+1)! through degree 2r+1.
    Taylor,
    /// Square of the degree-r Taylor polynomial of the square root;
    /// nonnegative on the real axis and exact through degree r.
    SqrtPoly,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Taylor => "taylor",
            SchemeKind::SqrtPoly => "sqrtpoly",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taylor" => Ok(SchemeKind::Taylor),
            "sqrtpoly" => Ok(SchemeKind::SqrtPoly),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme {other:?}, expected taylor or sqrtpoly"
            ))),
        }
    }
}

/// Scalar weights phi~_0 .. phi~_{2r+1} entering the weight matrix blocks.
#[derive(Debug, Clone)]
pub struct CoefficientScheme {
    pub kind: SchemeKind,
    pub weights: Vec<f64>,
}

/// Weights of the chosen scheme at truncation order r.
pub fn scheme_weights(kind: SchemeKind, r: usize) -> CoefficientScheme {
    let top = 2 * r + 1;
    let weights = match kind {
        SchemeKind::Taylor => phi_taylor_coeffs(top),
        SchemeKind::SqrtPoly => {
            let phi = phi_taylor_coeffs(top);
            let psi = psi_coeffs(r);
            let mut weights = Vec::with_capacity(top + 1);
            for k in 0..=top {
                if k <= r {
                    weights.push(phi[k]);
                } else if k <= 2 * r {
                    // Coefficient of u^k in the squared degree-r polynomial.
                    let mut w = 0.0;
                    for j in (k - r)..=r {
                        w += psi[j] * psi[k - j];
                    }
                    weights.push(w);
                } else {
                    weights.push(0.0);
                }
            }
            weights
        }
    };
    CoefficientScheme { kind, weights }
}

/// Matrix sequences of the recurrent Lyapunov scheme:
///
///   alpha_{j+1} = gamma_j beta_j,
///   beta_{j+1}  = gamma_j^{-1} alpha_j gamma_{j-1} gamma_j^{-1},
///   gamma_j     = L_A(alpha_j gamma_{j-1}),
///
/// started from alpha_1 = gamma_0 = L_A(mho), beta_1 =
/// gamma_0^{-1} mho gamma_0^{-1} and beta_0 = I.  Under exact physical
/// realizability L_A(mho) equals the CCR matrix Theta; computing it from the
/// Lyapunov equation keeps the factorization identities exact for models
/// whose printed data satisfies realizability only approximately.
///
/// The raw matrices are stored; optional per-index balancing scales are kept
/// alongside so that filter and weight assembly can normalize the alpha
/// factors without changing any invariant quantity.
#[derive(Debug, Clone)]
pub struct CascadeCoefficients {
    r: usize,
    alpha: Vec<DMatrix<f64>>,
    beta: Vec<DMatrix<f64>>,
    gamma: Vec<DMatrix<f64>>,
    gamma_condition_numbers: Vec<f64>,
    scale: Vec<f64>,
}

impl CascadeCoefficients {
    /// Truncation order the recursion was run for.
    pub fn order(&self) -> usize {
        self.r
    }

    /// Largest available sequence index, 2r + 1.
    pub fn max_index(&self) -> usize {
        2 * self.r + 1
    }

    /// alpha_j for j = 0..=2r+1 with the convention alpha_0 = I.
    pub fn alpha(&self, j: usize) -> &DMatrix<f64> {
        &self.alpha[j]
    }

    /// beta_j for j = 0..=2r+1.
    pub fn beta(&self, j: usize) -> &DMatrix<f64> {
        &self.beta[j]
    }

    /// gamma_j for j = 0..=2r+1 (the last index is diagnostic only).
    pub fn gamma(&self, j: usize) -> &DMatrix<f64> {
        &self.gamma[j]
    }

    /// Condition numbers of gamma_0 .. gamma_{2r}.
    pub fn gamma_condition_numbers(&self) -> &[f64] {
        &self.gamma_condition_numbers
    }

    /// Balancing scale sigma_j (all ones when balancing is disabled).
    pub fn scale(&self, j: usize) -> f64 {
        self.scale[j]
    }

    /// alpha_j / sigma_j, the subdiagonal block actually placed in the
    /// shaping filter.
    pub fn balanced_alpha(&self, j: usize) -> DMatrix<f64> {
        &self.alpha[j] / self.scale[j]
    }

    /// beta_j scaled by prod_{i<=j} sigma_i^2, compensating the alpha
    /// normalization exactly.
    pub fn balanced_beta(&self, j: usize) -> DMatrix<f64> {
        let factor: f64 = self.scale[..=j].iter().map(|s| s * s).product();
        &self.beta[j] * factor
    }
}

/// Runs the recurrent Lyapunov scheme to order r.  Balancing is off by
/// default: the theta powers and factorial coefficients of the weight
/// matrix already tame the growth of the raw sequences at practical orders.
pub fn compute_cascade(model: &OqhoModel, r: usize) -> Result<CascadeCoefficients> {
    compute_cascade_opts(model, r, false)
}

/// Runs the recurrent Lyapunov scheme to order r.  With `balance` set, the
/// per-index scales sigma_j = ||alpha_j||_F are recorded so the assembled
/// filter keeps its subdiagonal blocks at unit norm, with the compensating
/// growth moved into the weight blocks.
pub fn compute_cascade_opts(
    model: &OqhoModel,
    r: usize,
    balance: bool,
) -> Result<CascadeCoefficients> {
    require_hurwitz(model.a())?;
    let n = model.n();
    let mho = model.mho();
    let a = model.a();
    let eye = DMatrix::<f64>::identity(n, n);

    let gamma0 = solve_lyapunov(a, &mho)?;
    if condition_number(&gamma0) > GAMMA_CONDITION_LIMIT {
        return Err(Error::GammaSingular {
            index: 0,
            condition: condition_number(&gamma0),
        });
    }

    // beta_1 = gamma_0^{-1} mho gamma_0^{-1} through two solves.
    let gamma0_lu = gamma0.clone().lu();
    let w = gamma0_lu
        .solve(&mho)
        .ok_or_else(|| Error::SolveFailure("gamma[0] solve failed".into()))?;
    let beta1 = gamma0
        .transpose()
        .lu()
        .solve(&w.transpose())
        .ok_or_else(|| Error::SolveFailure("gamma[0] solve failed".into()))?
        .transpose();

    let mut alpha = vec![eye.clone(), gamma0.clone()];
    let mut beta = vec![eye, beta1];
    let mut gamma = vec![gamma0.clone()];
    let mut conds = vec![condition_number(&gamma0)];

    for j in 1..=(2 * r) {
        let product = &alpha[j] * &gamma[j - 1];
        let gamma_j = solve_lyapunov(a, &product)?;
        let cond = condition_number(&gamma_j);
        conds.push(cond);
        if cond > GAMMA_CONDITION_LIMIT {
            return Err(Error::GammaSingular {
                index: j,
                condition: cond,
            });
        }

        alpha.push(&gamma_j * &beta[j]);
        // beta_{j+1} = gamma_j^{-1} gamma_{j-1} beta_{j-1} gamma_{j-1}
        // gamma_j^{-1} = -M beta_{j-1} M^T with M = gamma_j^{-1} gamma_{j-1},
        // using the opposite symmetry of consecutive gamma matrices.  The
        // congruence keeps the symmetry classes of the sequence independent
        // of the conditioning of gamma_j.
        let m = gamma_j
            .clone()
            .lu()
            .solve(&gamma[j - 1])
            .ok_or_else(|| Error::SolveFailure(format!("gamma[{j}] solve failed")))?;
        beta.push(-(&m * &beta[j - 1] * m.transpose()));
        gamma.push(gamma_j);
    }

    // gamma_{2r+1} is never inverted; computed for the definiteness
    // diagnostics only.
    let tail = &alpha[2 * r + 1] * &gamma[2 * r];
    gamma.push(solve_lyapunov(a, &tail)?);

    let scale = alpha
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let norm = m.norm();
            if balance && j >= 1 && norm.is_finite() && norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();

    Ok(CascadeCoefficients {
        r,
        alpha,
        beta,
        gamma,
        gamma_condition_numbers: conds,
        scale,
    })
}

/// Doubled real representation [[Re X, -Im X], [Im X, Re X]] of a complex
/// matrix.
pub fn realify(x: &CMatrix) -> DMatrix<f64> {
    let (n, m) = x.shape();
    let mut out = DMatrix::<f64>::zeros(2 * n, 2 * m);
    for i in 0..n {
        for j in 0..m {
            let z = x[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + m)] = -z.im;
            out[(i + n, j)] = z.im;
            out[(i + n, j + m)] = z.re;
        }
    }
    out
}

/// Hermitian square root S of B (I - iJ) B^T = B B^T - i mho.
pub fn bob_sqrt(model: &OqhoModel) -> Result<CMatrix> {
    let bbt = symmetrize(&(model.b() * model.b().transpose()));
    let mho = model.mho();
    let arg = to_complex(&bbt) + to_complex(&mho) * Complex::new(0.0, -1.0);
    hermitian_sqrt_psd(&arg, 1e-10)
}

/// Real symmetric doubled square root, whose square is
/// [[B B^T, mho], [-mho, B B^T]].
pub fn realified_sqrt(model: &OqhoModel) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&realify(&bob_sqrt(model)?)))
}

/// Truncated shaping filter: block lower bidiagonal dynamics of order
/// nu = 4(r+1)n, input matrix carrying the doubled square root in its top
/// block, which is also kept separately.
#[derive(Debug, Clone)]
pub struct TruncatedFilter {
    pub r: usize,
    pub nu: usize,
    pub acal: DMatrix<f64>,
    pub bcal: DMatrix<f64>,
    pub rs: DMatrix<f64>,
}

impl TruncatedFilter {
    /// Input Gramian bcal bcal^T, nonzero only in its leading block.
    pub fn input_gram(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nu, self.nu);
        out.view_mut((0, 0), (self.rs.nrows(), self.rs.ncols()))
            .copy_from(&symmetrize(&(&self.rs * self.rs.transpose())));
        out
    }
}

fn set_pair_diag(target: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    let n = block.nrows();
    target.view_mut((row, col), (n, n)).copy_from(block);
    target.view_mut((row + n, col + n), (n, n)).copy_from(block);
}

/// Assembles the order-r filter from cascade coefficients computed to at
/// least that order.
pub fn assemble_filter(
    model: &OqhoModel,
    coeffs: &CascadeCoefficients,
    r: usize,
) -> Result<TruncatedFilter> {
    if coeffs.order() < r {
        return Err(Error::InvalidArgument(format!(
            "cascade computed to order {}, filter needs order {r}",
            coeffs.order()
        )));
    }
    let n = model.n();
    let two_n = 2 * n;
    let blocks = 2 * r + 2;
    let nu = blocks * two_n;

    let mut acal = DMatrix::<f64>::zeros(nu, nu);
    for blk in 0..blocks {
        set_pair_diag(&mut acal, blk * two_n, blk * two_n, model.a());
    }
    for k in 1..=(2 * r + 1) {
        set_pair_diag(&mut acal, k * two_n, (k - 1) * two_n, &coeffs.balanced_alpha(k));
    }

    let rs = realified_sqrt(model)?;
    let mut bcal = DMatrix::<f64>::zeros(nu, two_n);
    bcal.view_mut((0, 0), (two_n, two_n)).copy_from(&rs);

    Ok(TruncatedFilter {
        r,
        nu,
        acal,
        bcal,
        rs,
    })
}

/// Block-diagonal weight of the truncated quadratic form.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    pub theta: f64,
    pub h: DMatrix<f64>,
}

/// Assembles H_{theta,r} = diag(h_0, .., h_r), where each 4n x 4n block is
///
///   h_k = diag(I_2 (x) f_k, -bmat2 (x) g_k),
///   f_k = (-4 theta^2)^k phi~_{2k}   beta_{2k},
///   g_k = -2 theta (-4 theta^2)^k phi~_{2k+1} beta_{2k+1}.
pub fn assemble_weight(
    coeffs: &CascadeCoefficients,
    scheme: &CoefficientScheme,
    theta: f64,
    r: usize,
) -> Result<WeightMatrix> {
    if theta < 0.0 {
        return Err(Error::InvalidArgument(
            "risk sensitivity must be nonnegative".into(),
        ));
    }
    if coeffs.order() < r {
        return Err(Error::InvalidArgument(
            "cascade order too small for the requested weight".into(),
        ));
    }
    if scheme.weights.len() < 2 * r + 2 {
        return Err(Error::InvalidArgument(
            "coefficient scheme too short for the requested order".into(),
        ));
    }

    let n = coeffs.beta(0).nrows();
    let nu = 4 * (r + 1) * n;
    let mut h = DMatrix::<f64>::zeros(nu, nu);
    let minus_4t2 = -4.0 * theta * theta;
    let mut even_power = 1.0; // (-4 theta^2)^k
    for k in 0..=r {
        let f = coeffs.balanced_beta(2 * k) * (even_power * scheme.weights[2 * k]);
        let g =
            coeffs.balanced_beta(2 * k + 1) * (-2.0 * theta * even_power * scheme.weights[2 * k + 1]);
        let base = 4 * n * k;
        h.view_mut((base, base), (n, n)).copy_from(&f);
        h.view_mut((base + n, base + n), (n, n)).copy_from(&f);
        // -bmat2 (x) g places -g above the diagonal and +g below it.
        h.view_mut((base + 2 * n, base + 3 * n), (n, n)).copy_from(&(-&g));
        h.view_mut((base + 3 * n, base + 2 * n), (n, n)).copy_from(&g);
        even_power *= minus_4t2;
    }
    Ok(WeightMatrix {
        theta,
        h: symmetrize(&h),
    })
}

/// Residual of the transposition identity
/// E U E~ = V E~ V^{-1} U V^{-1} E V on the imaginary axis, where V solves
/// A V + V A^T + U = 0 and E~(i lambda) = E(i lambda)^*.
pub fn verify_transposition(model: &OqhoModel, u: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let v = solve_lyapunov(model.a(), u)?;
    let cond = condition_number(&v);
    if cond > 1e12 {
        return Err(Error::SingularV { condition: cond });
    }
    let e = resolvent(model.a(), lambda)?;
    let uc = to_complex(u);
    let lhs = &e * &uc * e.adjoint();

    let v_lu = v.clone().lu();
    let w = v_lu
        .solve(u)
        .ok_or_else(|| Error::SolveFailure("V solve failed".into()))?;
    let middle = v
        .transpose()
        .lu()
        .solve(&w.transpose())
        .ok_or_else(|| Error::SolveFailure("V solve failed".into()))?
        .transpose();
    let vc = to_complex(&v);
    let rhs = &vc * e.adjoint() * to_complex(&middle) * &e * &vc;

    Ok((lhs.clone() - rhs).norm() / (1.0 + lhs.norm()))
}

/// Residual of the order-k ordered-product factorization
/// (E mho E~)^k = (-1)^k [alpha_1^T E~ ... alpha_k^T E~] beta_k
/// [E alpha_k ... E alpha_1] at one frequency.
pub fn verify_ordered_factorization(
    model: &OqhoModel,
    coeffs: &CascadeCoefficients,
    k: usize,
    lambda: f64,
) -> Result<f64> {
    if k == 0 || k > coeffs.max_index() {
        return Err(Error::InvalidArgument(format!(
            "factorization order k = {k} outside 1..={}",
            coeffs.max_index()
        )));
    }
    let e = resolvent(model.a(), lambda)?;
    let e_adj = e.adjoint();
    let mho = to_complex(&model.mho());

    let kernel = &e * &mho * &e_adj;
    let mut lhs = kernel.clone();
    for _ in 1..k {
        lhs = &lhs * &kernel;
    }

    let n = model.n();
    let mut left = CMatrix::identity(n, n);
    for j in 1..=k {
        left = left * to_complex(&coeffs.alpha(j).transpose()) * &e_adj;
    }
    let mut right = CMatrix::identity(n, n);
    for j in (1..=k).rev() {
        right = right * &e * to_complex(coeffs.alpha(j));
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let rhs = left * to_complex(coeffs.beta(k)) * right * Complex::new(sign, 0.0);

    Ok((lhs.clone() - rhs).norm() / (1.0 + lhs.norm()))
}

/// Transfer functions G_0(i lambda) .. G_kmax(i lambda) of the cascade,
/// G_k = E alpha_k E alpha_{k-1} ... E alpha_1 E with raw alpha factors.
pub fn cascade_transfer(
    model: &OqhoModel,
    coeffs: &CascadeCoefficients,
    kmax: usize,
    lambda: f64,
) -> Result<Vec<CMatrix>> {
    if kmax > coeffs.max_index() {
        return Err(Error::InvalidArgument(
            "cascade transfer order exceeds computed coefficients".into(),
        ));
    }
    let e = resolvent(model.a(), lambda)?;
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(e.clone());
    for k in 1..=kmax {
        let previous = out.last().expect("nonempty");
        out.push(&e * to_complex(coeffs.alpha(k)) * previous);
    }
    Ok(out)
}

/// Partial sums of the factorized spectral density:
/// S (sum_{k=0}^{kmax} (-2 i theta)^k phi_k G_k^* beta_k G_k) S.
pub fn truncated_spectral_series(
    model: &OqhoModel,
    coeffs: &CascadeCoefficients,
    theta: f64,
    kmax: usize,
    lambda: f64,
) -> Result<CMatrix> {
    let transfers = cascade_transfer(model, coeffs, kmax, lambda)?;
    let phi = phi_taylor_coeffs(kmax);
    let s = bob_sqrt(model)?;
    let n = model.n();
    let mut sum = CMatrix::zeros(n, n);
    let z = Complex::new(0.0, -2.0 * theta);
    let mut zpow = Complex::new(1.0, 0.0);
    for (k, g) in transfers.iter().enumerate() {
        sum += g.adjoint() * to_complex(coeffs.beta(k)) * g * (zpow * phi[k]);
        zpow *= z;
    }
    Ok(&s * sum * &s)
}
