//! Point estimators: OLS, standard projected, constrained least squares,
//! oracle, and projected oracle.
//!
//! Constrained fits report a feasibility residual and the condition number
//! estimate of the matrix they inverted. All solves go through
//! factorizations; a full inverse is never formed here.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ConstraintSet, Dataset};

/// Which estimator produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    Projected,
    Cls,
    Oracle,
    ProjectedOracle,
    ChebMom,
    Glm,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::Projected => "projected",
            EstimatorKind::Cls => "cls",
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::ProjectedOracle => "projected_oracle",
            EstimatorKind::ChebMom => "cheb_mom",
            EstimatorKind::Glm => "glm",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(EstimatorKind::Ols),
            "projected" => Ok(EstimatorKind::Projected),
            "cls" => Ok(EstimatorKind::Cls),
            "oracle" => Ok(EstimatorKind::Oracle),
            "projected_oracle" | "projected-oracle" => Ok(EstimatorKind::ProjectedOracle),
            "cheb_mom" | "cheb-mom" => Ok(EstimatorKind::ChebMom),
            "glm" => Ok(EstimatorKind::Glm),
            other => Err(Error::ConfigInvalid(format!("unknown estimator kind `{other}`"))),
        }
    }
}

/// A fitted coefficient vector with diagnostics.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub beta_hat: DVector<f64>,
    pub kind: EstimatorKind,
    /// Condition estimate of the matrix that was inverted (0 when none).
    pub gram_condition: f64,
    /// `||A beta_hat - c||_inf` when a constraint was used.
    pub feasibility_residual: Option<f64>,
}

/// Orthogonal projector onto the null space of `A` together with the
/// minimum-norm solution of `A v = c`.
#[derive(Clone, Debug)]
pub struct ProjectorPair {
    pub p_orth: DMatrix<f64>,
    pub feasible_point: DVector<f64>,
}

impl ProjectorPair {
    /// `P v + feasible_point`, the affine projection of `v`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.p_orth * v + &self.feasible_point
    }
}

/// `P = I - A^T (A A^T)^{-1} A` and the shift `A^T (A A^T)^{-1} c`,
/// through a Cholesky factorization of `A A^T`.
pub fn orthogonal_projector(cs: &ConstraintSet) -> Result<ProjectorPair> {
    let p = cs.p();
    if cs.is_empty() {
        return Ok(ProjectorPair {
            p_orth: DMatrix::identity(p, p),
            feasible_point: DVector::zeros(p),
        });
    }
    let a = cs.a();
    let aat = a * a.transpose();
    let chol = Cholesky::new(aat).ok_or(Error::RankDeficient { rank: 0, q: cs.q() })?;
    // A^T (A A^T)^{-1} A, built from the solved q x p block.
    let solved = chol.solve(&a.clone());
    let p_orth = DMatrix::identity(p, p) - a.transpose() * &solved;
    let feasible_point = a.transpose() * chol.solve(&cs.c().clone());
    Ok(ProjectorPair { p_orth, feasible_point })
}

/// Options controlling the Gram-matrix path of the constrained fits.
#[derive(Clone, Copy, Debug, Default)]
pub struct FitOptions {
    /// Replace a singular (or n <= p) sample Gram matrix with the identity
    /// instead of erroring. Exploratory use only.
    pub identity_fallback: bool,
}

struct GramFactor {
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    cond: f64,
}

fn factor_gram(data: &Dataset, opts: &FitOptions) -> Result<GramFactor> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        if opts.identity_fallback {
            let gram = DMatrix::identity(p, p);
            let chol = Cholesky::new(gram.clone()).unwrap();
            return Ok(GramFactor { gram, chol, cond: 1.0 });
        }
        return Err(Error::NTooSmall { n, bound: p });
    }
    let gram = data.gram();
    match linalg::gram_cholesky(&gram) {
        Ok((chol, cond)) => Ok(GramFactor { gram, chol, cond }),
        Err(e) => {
            if opts.identity_fallback {
                let gram = DMatrix::identity(p, p);
                let chol = Cholesky::new(gram.clone()).unwrap();
                Ok(GramFactor { gram, chol, cond: 1.0 })
            } else {
                Err(e)
            }
        }
    }
}

/// Ordinary least squares `(X^T X)^{-1} X^T y`.
pub fn fit_ols(data: &Dataset) -> Result<EstimateResult> {
    let f = factor_gram(data, &FitOptions::default())?;
    let beta = f.chol.solve(&data.cross_moment());
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::Ols,
        gram_condition: f.cond,
        feasibility_residual: None,
    })
}

/// Standard projected estimator: OLS mapped into the constraint set by the
/// orthogonal projector.
pub fn fit_projected(data: &Dataset, cs: &ConstraintSet) -> Result<EstimateResult> {
    check_dims(data, cs)?;
    let ols = fit_ols(data)?;
    let proj = orthogonal_projector(cs)?;
    let beta = proj.project(&ols.beta_hat);
    let residual = cs.residual(&beta);
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::Projected,
        gram_condition: ols.gram_condition,
        feasibility_residual: Some(residual),
    })
}

/// Constrained least squares: the minimizer of `||y - X beta||^2` subject
/// to `A beta = c`, via the Lagrangian correction of OLS.
pub fn fit_cls(data: &Dataset, cs: &ConstraintSet) -> Result<EstimateResult> {
    fit_cls_with(data, cs, &FitOptions::default())
}

pub fn fit_cls_with(data: &Dataset, cs: &ConstraintSet, opts: &FitOptions) -> Result<EstimateResult> {
    check_dims(data, cs)?;
    let f = factor_gram(data, opts)?;
    let mut beta = f.chol.solve(&data.cross_moment());
    if !cs.is_empty() {
        let a = cs.a();
        // W = Gram^{-1} A^T, S = A W; two passes of the correction pin the
        // feasibility residual to roundoff.
        let w = f.chol.solve(&a.transpose());
        let s = a * &w;
        let s_chol = Cholesky::new(s).ok_or(Error::RankDeficient { rank: 0, q: cs.q() })?;
        for _ in 0..2 {
            let gap = a * &beta - cs.c();
            beta -= &w * s_chol.solve(&gap);
        }
    }
    let residual = cs.residual(&beta);
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::Cls,
        gram_condition: f.cond,
        feasibility_residual: Some(residual),
    })
}

/// CLS through the null-space reparameterization
/// `beta = V alpha + u_c` with `V` an orthonormal basis of `null(A)`.
///
/// Algebraically identical to [`fit_cls`]; kept as an independent route for
/// cross-checks.
pub fn fit_cls_via_nullspace(data: &Dataset, cs: &ConstraintSet) -> Result<EstimateResult> {
    check_dims(data, cs)?;
    let f = factor_gram(data, &FitOptions::default())?;
    if cs.is_empty() {
        return fit_cls(data, cs);
    }
    let v = linalg::null_space_basis(cs.a());
    let proj = orthogonal_projector(cs)?;
    let u_c = &proj.feasible_point;
    let reduced = v.transpose() * &f.gram * &v;
    let chol = Cholesky::new(reduced).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    let rhs = v.transpose() * (data.cross_moment() - &f.gram * u_c);
    let alpha = chol.solve(&rhs);
    let beta = &v * alpha + u_c;
    let residual = cs.residual(&beta);
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::Cls,
        gram_condition: f.cond,
        feasibility_residual: Some(residual),
    })
}

/// Oracle estimator `Sigma^{-1} X^T y / n`; valid for any aspect ratio.
pub fn fit_oracle(data: &Dataset, sigma_matrix: &DMatrix<f64>) -> Result<EstimateResult> {
    if sigma_matrix.nrows() != data.p() || sigma_matrix.ncols() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} but p = {}",
            sigma_matrix.nrows(),
            sigma_matrix.ncols(),
            data.p()
        )));
    }
    let chol = linalg::cholesky(sigma_matrix)?;
    let cond = linalg::spd_condition_estimate(sigma_matrix, &chol);
    let beta = chol.solve(&data.cross_moment());
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::Oracle,
        gram_condition: cond,
        feasibility_residual: None,
    })
}

/// Projected oracle estimator: the oracle fit mapped into the constraint set.
pub fn fit_projected_oracle(
    data: &Dataset,
    sigma_matrix: &DMatrix<f64>,
    cs: &ConstraintSet,
) -> Result<EstimateResult> {
    check_dims(data, cs)?;
    let oracle = fit_oracle(data, sigma_matrix)?;
    let proj = orthogonal_projector(cs)?;
    let beta = proj.project(&oracle.beta_hat);
    let residual = cs.residual(&beta);
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::ProjectedOracle,
        gram_condition: oracle.gram_condition,
        feasibility_residual: Some(residual),
    })
}

fn check_dims(data: &Dataset, cs: &ConstraintSet) -> Result<()> {
    if cs.p() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "constraints act on dimension {} but design has p = {}",
            cs.p(),
            data.p()
        )));
    }
    Ok(())
}
