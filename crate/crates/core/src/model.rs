//! Domain types: datasets, affine constraint sets, covariance
//! specifications, ground-truth models, and asymptotic ratios.
//!
//! All types validate on construction and are immutable afterwards.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative singular-value threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Absolute tolerance for `||A beta - c||_inf` when a true model is paired
/// with a constraint set.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Design matrix (n x p) and outcome vector (length n).
#[derive(Clone, Debug)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but outcome has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::DimensionMismatch("need n >= 1 and p >= 1".into()));
        }
        if !linalg::all_finite_mat(&x) {
            return Err(Error::NonFinite("design matrix"));
        }
        if !linalg::all_finite_vec(&y) {
            return Err(Error::NonFinite("outcome vector"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Sample second-moment matrix `X^T X / n`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n() as f64;
        self.x.transpose() * &self.x / n
    }

    /// Cross moment `X^T y / n`.
    pub fn cross_moment(&self) -> DVector<f64> {
        let n = self.n() as f64;
        self.x.transpose() * &self.y / n
    }
}

/// Affine constraint `A beta = c` with `A` of full row rank `q < p`.
///
/// `q = 0` is the empty sentinel: no constraint, projector is the identity.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    a: DMatrix<f64>,
    c: DVector<f64>,
}

impl ConstraintSet {
    /// Empty constraint set acting on dimension `p`.
    pub fn empty(p: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, p),
            c: DVector::zeros(0),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn q(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.q() == 0
    }

    /// `||A v - c||_inf`, the feasibility residual of `v`.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        linalg::inf_norm(&(&self.a * v - &self.c))
    }
}

/// Validate a constraint pair `(a, c)` into a [`ConstraintSet`].
///
/// Rank is the count of singular values above `rank_tol` times the largest.
pub fn validate_constraints(a: DMatrix<f64>, c: DVector<f64>, rank_tol: f64) -> Result<ConstraintSet> {
    let (q, p) = a.shape();
    if c.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "constraint matrix has {} rows but vector has length {}",
            q,
            c.len()
        )));
    }
    if !linalg::all_finite_mat(&a) || !linalg::all_finite_vec(&c) {
        return Err(Error::NonFinite("constraint set"));
    }
    // Rank is diagnosed before the q < p guard so that a dependent-row
    // matrix reports the more specific failure.
    if q > 0 {
        let svals = a.clone().singular_values();
        let max = svals.iter().cloned().fold(0.0f64, f64::max);
        let rank = if max == 0.0 {
            0
        } else {
            svals.iter().filter(|&&s| s > rank_tol * max).count()
        };
        if rank < q {
            return Err(Error::RankDeficient { rank, q });
        }
        if q >= p {
            return Err(Error::QNotLessThanP { q, p });
        }
    }
    Ok(ConstraintSet { a, c })
}

impl ConstraintSet {
    /// Validate with the default rank tolerance.
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        validate_constraints(a, c, DEFAULT_RANK_TOL)
    }

    /// Assemble from parts whose full row rank the caller has already
    /// established (the scenario runner checks via the Gram factor of
    /// `A A^T` to keep the singular value decomposition off the hot path).
    pub(crate) fn from_checked_parts(a: DMatrix<f64>, c: DVector<f64>) -> Self {
        Self { a, c }
    }
}

/// Reference-population constraint construction: `A = B Sigma_N`,
/// `c = A beta_star` with `Sigma_N = ref_x^T ref_x / N`.
///
/// The result is feasible for `beta_star` by construction.
pub fn build_reference_constraints(
    b: &DMatrix<f64>,
    ref_x: &DMatrix<f64>,
    beta_star: &DVector<f64>,
) -> Result<ConstraintSet> {
    let p = b.ncols();
    if ref_x.ncols() != p || beta_star.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "B has {} columns, reference sample has {}, beta has length {}",
            p,
            ref_x.ncols(),
            beta_star.len()
        )));
    }
    if ref_x.nrows() == 0 {
        return Err(Error::DimensionMismatch("reference sample needs N >= 1 rows".into()));
    }
    let n_ref = ref_x.nrows() as f64;
    // A = B (ref_x^T ref_x) / N, computed as (ref_x B^T)^T ref_x / N to
    // avoid materializing the p x p second-moment matrix.
    let w = ref_x * b.transpose();
    let a = w.transpose() * ref_x / n_ref;
    let c = &a * beta_star;
    validate_constraints(a, c, DEFAULT_RANK_TOL)
}

/// Population dispersion matrix specification.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum CovarianceSpec {
    Isotropic { p: usize },
    Equicorrelated { p: usize, rho: f64 },
    Explicit { sigma: Vec<Vec<f64>> },
}

impl CovarianceSpec {
    pub fn isotropic(p: usize) -> Self {
        CovarianceSpec::Isotropic { p }
    }

    pub fn equicorrelated(p: usize, rho: f64) -> Self {
        CovarianceSpec::Equicorrelated { p, rho }
    }

    pub fn explicit(sigma: &DMatrix<f64>) -> Self {
        let rows = (0..sigma.nrows())
            .map(|i| sigma.row(i).iter().copied().collect())
            .collect();
        CovarianceSpec::Explicit { sigma: rows }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Isotropic { p } | CovarianceSpec::Equicorrelated { p, .. } => *p,
            CovarianceSpec::Explicit { sigma } => sigma.len(),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, CovarianceSpec::Isotropic { .. })
    }
}

/// Realize a [`CovarianceSpec`] as a dense SPD matrix.
pub fn realize_covariance(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    match spec {
        CovarianceSpec::Isotropic { p } => {
            if *p == 0 {
                return Err(Error::ConfigInvalid("covariance dimension must be positive".into()));
            }
            Ok(DMatrix::identity(*p, *p))
        }
        CovarianceSpec::Equicorrelated { p, rho } => {
            if *p == 0 {
                return Err(Error::ConfigInvalid("covariance dimension must be positive".into()));
            }
            let lower = if *p > 1 { -1.0 / (*p as f64 - 1.0) } else { -1.0 };
            if !(*rho > lower && *rho < 1.0) {
                return Err(Error::ConfigInvalid(format!(
                    "equicorrelation rho = {rho} outside ({lower}, 1)"
                )));
            }
            let mut m = DMatrix::from_element(*p, *p, *rho);
            for i in 0..*p {
                m[(i, i)] = 1.0;
            }
            Ok(m)
        }
        CovarianceSpec::Explicit { sigma } => {
            let p = sigma.len();
            if p == 0 || sigma.iter().any(|row| row.len() != p) {
                return Err(Error::DimensionMismatch("explicit covariance must be square".into()));
            }
            let m = DMatrix::from_fn(p, p, |i, j| sigma[i][j]);
            if !linalg::all_finite_mat(&m) {
                return Err(Error::NonFinite("covariance matrix"));
            }
            if linalg::mat_inf_norm(&(&m - m.transpose())) > 1e-10 * linalg::mat_inf_norm(&m) {
                return Err(Error::NotPositiveDefinite);
            }
            let chol = linalg::cholesky(&m)?;
            let cond = linalg::spd_condition_estimate(&m, &chol);
            if !cond.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            Ok(m)
        }
    }
}

/// Ground truth: effect vector, noise level, and covariate dispersion.
#[derive(Clone, Debug)]
pub struct TrueModel {
    pub beta_star: DVector<f64>,
    pub sigma: f64,
    pub covariance: CovarianceSpec,
}

impl TrueModel {
    pub fn new(beta_star: DVector<f64>, sigma: f64, covariance: CovarianceSpec) -> Result<Self> {
        // sigma = 0 is admitted for noiseless pipeline checks.
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::ConfigInvalid(format!("sigma = {sigma} must be nonnegative")));
        }
        if !linalg::all_finite_vec(&beta_star) {
            return Err(Error::NonFinite("effect vector"));
        }
        if covariance.dim() != beta_star.len() {
            return Err(Error::DimensionMismatch(format!(
                "effect vector length {} vs covariance dimension {}",
                beta_star.len(),
                covariance.dim()
            )));
        }
        Ok(Self { beta_star, sigma, covariance })
    }

    /// Check that the effect vector satisfies the constraint set.
    pub fn check_feasible(&self, cs: &ConstraintSet) -> Result<()> {
        let r = cs.residual(&self.beta_star);
        if r > FEASIBILITY_TOL {
            return Err(Error::ConfigInvalid(format!(
                "effect vector infeasible: ||A beta - c||_inf = {r:.3e}"
            )));
        }
        Ok(())
    }
}

/// Aspect ratio `alpha = p/n` and constraint ratio `gamma = q/p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AspectRatios {
    pub alpha: f64,
    pub gamma: f64,
}

impl AspectRatios {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::ConfigInvalid(format!("alpha = {alpha} must be in [0, inf)")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::ConfigInvalid(format!("gamma = {gamma} must be in [0, 1)")));
        }
        Ok(Self { alpha, gamma })
    }

    /// Finite-sample ratios `p/n` and `q/p`.
    pub fn from_dims(n: usize, p: usize, q: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::ConfigInvalid("n and p must be positive".into()));
        }
        Self::new(p as f64 / n as f64, q as f64 / p as f64)
    }

    /// `1 - (1 - gamma) alpha`, the moderately-high-dimension margin.
    /// Errors when the margin is not strictly positive.
    pub fn moderate_margin(&self) -> Result<f64> {
        let prod = (1.0 - self.gamma) * self.alpha;
        if prod >= 1.0 {
            return Err(Error::RatioOutOfRange(prod));
        }
        Ok(1.0 - prod)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn validate_unit_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let cs = validate_constraints(a, DVector::from_vec(vec![2.0]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(cs.q(), 1);
        assert_eq!(cs.p(), 3);
    }

    #[test]
    fn validate_rejects_dependent_rows() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let err = validate_constraints(a, DVector::zeros(2), DEFAULT_RANK_TOL).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, q: 2 }));
    }

    #[test]
    fn validate_rejects_q_equal_p() {
        let a = DMatrix::identity(3, 3);
        let err = validate_constraints(a, DVector::zeros(3), DEFAULT_RANK_TOL).unwrap_err();
        assert!(matches!(err, Error::QNotLessThanP { q: 3, p: 3 }));
    }

    #[test]
    fn reference_constraints_identity_sample() {
        // ref_x = sqrt(N) I gives Sigma_N = I exactly.
        let p = 3;
        let refx = DMatrix::identity(p, p) * (p as f64).sqrt();
        let b = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let beta = DVector::from_vec(vec![7.0, -1.0, 2.0]);
        let cs = build_reference_constraints(&b, &refx, &beta).unwrap();
        assert_relative_eq!(cs.a()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(cs.c()[0], 7.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_constraints_exactly_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, q, n_ref) = (12usize, 4usize, 1000usize);
        let refx = DMatrix::from_fn(n_ref, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut b = DMatrix::zeros(q, p);
        for i in 0..q {
            b[(i, i)] = 1.0;
        }
        let beta = DVector::from_fn(p, |_, _| 5.0 + 5.0f64.sqrt() * rng.sample::<f64, _>(StandardNormal));
        let cs = build_reference_constraints(&b, &refx, &beta).unwrap();
        assert_eq!(cs.residual(&beta), 0.0);
    }

    #[test]
    fn reference_constraints_zero_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let refx = DMatrix::from_fn(20, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(2, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cs = build_reference_constraints(&b, &refx, &DVector::zeros(4)).unwrap();
        assert_eq!(cs.c(), &DVector::zeros(2));
    }

    #[test]
    fn realize_isotropic_and_equicorrelated() {
        let id = realize_covariance(&CovarianceSpec::isotropic(3)).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));
        let eq = realize_covariance(&CovarianceSpec::equicorrelated(2, 0.5)).unwrap();
        assert_eq!(eq, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    }

    #[test]
    fn realize_rejects_indefinite_explicit() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = realize_covariance(&CovarianceSpec::explicit(&m)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite));
    }

    #[test]
    fn realize_rejects_rho_below_lower_bound() {
        let err = realize_covariance(&CovarianceSpec::equicorrelated(3, -0.6)).unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid(_)));
    }

    #[test]
    fn covariance_spec_json_round_trip() {
        let spec = CovarianceSpec::equicorrelated(100, 0.5);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"variant":"equicorrelated","p":100,"rho":0.5}"#);
        let back: CovarianceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn ratios_guard_moderate_regime() {
        let r = AspectRatios::new(2.0, 0.25).unwrap();
        assert!(r.moderate_margin().is_err());
        let ok = AspectRatios::new(0.5, 0.0).unwrap();
        assert_relative_eq!(ok.moderate_margin().unwrap(), 0.5);
    }
}
