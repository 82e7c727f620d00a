//! Closed-form risk and gain evaluators used both as library surface and
//! as oracles for the Monte Carlo suites.
//!
//! Every limit is evaluated as its finite-(n, p, q) surrogate.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{AspectRatios, ConstraintSet};

/// Risk summary for the constrained least squares estimator.
#[derive(Clone, Debug, Serialize)]
pub struct RiskReport {
    /// Conditional-on-X trace risk, when a design was supplied.
    pub finite_sample_trace_risk: Option<f64>,
    /// General-covariance asymptotic risk surrogate.
    pub asymptotic_risk: f64,
    /// `sigma^2 (1-gamma) alpha / (1 - (1-gamma) alpha)` when the
    /// covariance is the identity.
    pub isotropic_closed_form: Option<f64>,
}

/// Expected gain of projecting, with the chi-square mixture weights.
#[derive(Clone, Debug, Serialize)]
pub struct GainReport {
    pub expected_gain: f64,
    pub eigen_weights: Vec<f64>,
    pub empirical_gain: Option<f64>,
}

/// `Sigma^{-1} - Sigma^{-1} A^T (A Sigma^{-1} A^T)^{-1} A Sigma^{-1}`,
/// the precision of the constrained estimator. Reduces to `Sigma^{-1}`
/// for an empty constraint set.
pub fn constrained_precision(sigma: &DMatrix<f64>, cs: &ConstraintSet) -> Result<DMatrix<f64>> {
    if cs.p() != sigma.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "constraints act on dimension {} but covariance is {}x{}",
            cs.p(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let chol = linalg::cholesky(sigma)?;
    let inv = chol.inverse();
    if cs.is_empty() {
        return Ok(inv);
    }
    let w = chol.solve(&cs.a().transpose());
    let s = cs.a() * &w;
    let s_chol = Cholesky::new(s).ok_or(Error::RankDeficient { rank: 0, q: cs.q() })?;
    let correction = &w * s_chol.solve(&w.transpose());
    Ok(inv - correction)
}

/// Conditional-on-X risk of the CLS estimator under Gaussian errors:
/// `(sigma^2 / n) Tr(C Gram^{-1})` with the constrained projection `C`.
pub fn conditional_minimax_risk(x: &DMatrix<f64>, cs: &ConstraintSet, sigma_sq: f64) -> Result<f64> {
    let (n, p) = x.shape();
    if cs.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "constraints act on dimension {} but design has p = {}",
            cs.p(),
            p
        )));
    }
    let gram = x.transpose() * x / n as f64;
    let (chol, _) = linalg::gram_cholesky(&gram)?;
    let mut trace = linalg::trace_of_inverse(&chol, p);
    if !cs.is_empty() {
        let w = chol.solve(&cs.a().transpose());
        let s = cs.a() * &w;
        let s_chol = Cholesky::new(s).ok_or(Error::RankDeficient { rank: 0, q: cs.q() })?;
        // Tr(Gram^{-1} A^T S^{-1} A Gram^{-1}) = Tr(S^{-1} W^T W).
        let m = w.transpose() * &w;
        let z = s_chol.solve(&m);
        trace -= z.trace();
    }
    Ok(sigma_sq / n as f64 * trace)
}

/// Conditional expected gain of the standard projected estimator:
/// `(sigma^2 / n) Tr(P_A Gram^{-1})`.
pub fn conditional_expected_gain(x: &DMatrix<f64>, cs: &ConstraintSet, sigma_sq: f64) -> Result<f64> {
    let (n, p) = x.shape();
    if cs.is_empty() {
        return Ok(0.0);
    }
    if cs.p() != p {
        return Err(Error::DimensionMismatch("constraint dimension mismatch".into()));
    }
    let gram = x.transpose() * x / n as f64;
    let (chol, _) = linalg::gram_cholesky(&gram)?;
    let a = cs.a();
    let aat = a * a.transpose();
    let aat_chol = Cholesky::new(aat).ok_or(Error::RankDeficient { rank: 0, q: cs.q() })?;
    // Tr(A^T (A A^T)^{-1} A Gram^{-1}) = Tr((A A^T)^{-1} (A Gram^{-1} A^T)).
    let w = chol.solve(&a.transpose());
    let m = a * w;
    let z = aat_chol.solve(&m);
    Ok(sigma_sq / n as f64 * z.trace())
}

/// Asymptotic risk surrogate:
/// `sigma^2 / (1 - (1-gamma) alpha) * (1/n) Tr(constrained precision)`,
/// with `n = p / alpha`. The isotropic closed form is filled when the
/// covariance is the identity.
pub fn asymptotic_risk(
    sigma_sq: f64,
    sigma_matrix: &DMatrix<f64>,
    cs: &ConstraintSet,
    ratios: &AspectRatios,
) -> Result<RiskReport> {
    let margin = ratios.moderate_margin()?;
    let p = sigma_matrix.nrows();
    let isotropic = linalg::mat_inf_norm(&(sigma_matrix - DMatrix::identity(p, p))) < 1e-12;
    let isotropic_closed_form = if isotropic {
        Some(sigma_sq * (1.0 - ratios.gamma) * ratios.alpha / margin)
    } else {
        None
    };
    let asymptotic = if ratios.alpha == 0.0 {
        0.0
    } else {
        let inv_n = ratios.alpha / p as f64;
        let precision = constrained_precision(sigma_matrix, cs)?;
        sigma_sq / margin * inv_n * precision.trace()
    };
    Ok(RiskReport {
        finite_sample_trace_risk: None,
        asymptotic_risk: asymptotic,
        isotropic_closed_form,
    })
}

/// Leading-order expected gain under isotropy: `q sigma^2 / (n (1 - alpha))`.
pub fn expected_gain(n: usize, q: usize, sigma_sq: f64, ratios: &AspectRatios) -> Result<f64> {
    if ratios.alpha >= 1.0 {
        return Err(Error::RatioOutOfRange(ratios.alpha));
    }
    Ok(q as f64 * sigma_sq / (n as f64 * (1.0 - ratios.alpha)))
}

/// Weights of the chi-square mixture of `n G_n / sigma^2` on a fixed design:
/// the `q` non-zero eigenvalues, descending, of
/// `n X (X^T X)^{-1} P_A (X^T X)^{-1} X^T`.
pub fn gain_eigen_weights(x: &DMatrix<f64>, cs: &ConstraintSet) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    let q = cs.q();
    if q == 0 {
        return Err(Error::ConfigInvalid("gain weights need q >= 1".into()));
    }
    if cs.p() != p {
        return Err(Error::DimensionMismatch("constraint dimension mismatch".into()));
    }
    let gram = x.transpose() * x / n as f64;
    let (chol, _) = linalg::gram_cholesky(&gram)?;
    let k = chol.solve(&x.transpose());
    let a = cs.a();
    let aat = a * a.transpose();
    let aat_chol = Cholesky::new(aat).ok_or(Error::RankDeficient { rank: 0, q })?;
    let r = a * &k;
    let pak = a.transpose() * aat_chol.solve(&r);
    // (1/n) K^T P_A K = n X (X^T X)^{-1} P_A (X^T X)^{-1} X^T.
    let sandwich = k.transpose() * pak / n as f64;
    let vals = linalg::symmetrized_eigenvalues(&sandwich);
    let max = vals.first().copied().unwrap_or(0.0).abs();
    let tail = vals.iter().skip(q).fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max > 0.0 && tail > 1e-8 * max {
        return Err(Error::ConfigInvalid(format!(
            "sandwich matrix has rank above q: tail eigenvalue {tail:.3e}"
        )));
    }
    Ok(vals.into_iter().take(q).collect())
}

/// Draw-once helper for the chi-square mixture `sum_i w_i chi^2_1`.
pub fn chi_square_mixture_sample<R: rand::Rng>(weights: &[f64], rng: &mut R) -> f64 {
    use rand_distr::StandardNormal;
    weights
        .iter()
        .map(|w| {
            let z: f64 = rng.sample(StandardNormal);
            w * z * z
        })
        .sum()
}

/// Sum of mixture weights; equals `Tr(P_A Gram^{-1})` by trace cyclicity.
pub fn gain_weight_sum_identity(x: &DMatrix<f64>, cs: &ConstraintSet) -> Result<f64> {
    let n = x.nrows() as f64;
    conditional_expected_gain(x, cs, 1.0).map(|g| g * n)
}

#[allow(dead_code)]
fn _assert_vector_types(_: &DVector<f64>) {}
