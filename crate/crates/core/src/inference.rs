//! Uncertainty quantification: asymptotic variances, corrected jackknife,
//! confidence intervals, per-coordinate tests, and Holm-Bonferroni
//! multiplicity control.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{orthogonal_projector, EstimateResult};
use crate::linalg;
use crate::model::{AspectRatios, ConstraintSet, Dataset};
use crate::stats::{normal_cdf, normal_quantile};
use crate::theory::constrained_precision;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    ClsAsymptotic,
    JackknifeCorrected,
    ProjectedOracleAsymptotic,
}

/// Per-coordinate variance of `sqrt(n) (estimate_j - beta*_j)`.
///
/// Callers divide by `n` to obtain the variance of the estimate itself.
#[derive(Clone, Debug)]
pub struct VarianceModel {
    pub kind: VarianceKind,
    pub per_coordinate: DVector<f64>,
}

/// One row of an inference table.
#[derive(Clone, Debug)]
pub struct CoordinateInference {
    pub index: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub rejected: bool,
}

/// Asymptotic variance of the CLS coordinates:
/// `sigma^2 s_{C,j} / (1 - (1-gamma) alpha)` on the sqrt(n) scale.
pub fn cls_asymptotic_variance(
    sigma_sq: f64,
    sigma_matrix: &DMatrix<f64>,
    cs: &ConstraintSet,
    ratios: &AspectRatios,
) -> Result<VarianceModel> {
    let margin = ratios.moderate_margin()?;
    let precision = constrained_precision(sigma_matrix, cs)?;
    let per = DVector::from_fn(sigma_matrix.nrows(), |j, _| {
        (sigma_sq * precision[(j, j)] / margin).max(0.0)
    });
    Ok(VarianceModel {
        kind: VarianceKind::ClsAsymptotic,
        per_coordinate: per,
    })
}

/// Asymptotic variance of the projected oracle coordinates:
/// `(beta*_j)^2 + (sigma^2 + beta*^T Sigma beta*) s_{P,j}`.
///
/// Requires oracle knowledge of `beta_star`; passing an estimate instead
/// makes this a plug-in approximation.
pub fn projected_oracle_variance(
    beta_star: &DVector<f64>,
    sigma_sq: f64,
    sigma_matrix: &DMatrix<f64>,
    cs: &ConstraintSet,
) -> Result<VarianceModel> {
    let p = sigma_matrix.nrows();
    if beta_star.len() != p || cs.p() != p {
        return Err(Error::DimensionMismatch("projected oracle variance inputs disagree".into()));
    }
    let chol = linalg::cholesky(sigma_matrix)?;
    let inv = chol.inverse();
    let proj = orthogonal_projector(cs)?;
    let m = &proj.p_orth * inv * &proj.p_orth;
    let signal = (beta_star.transpose() * sigma_matrix * beta_star)[(0, 0)];
    let per = DVector::from_fn(p, |j, _| {
        let s_p = m[(j, j)].max(0.0);
        beta_star[j] * beta_star[j] + (sigma_sq + signal) * s_p
    });
    Ok(VarianceModel {
        kind: VarianceKind::ProjectedOracleAsymptotic,
        per_coordinate: per,
    })
}

/// Raw and corrected leave-one-out variance per coordinate.
#[derive(Clone, Debug)]
pub struct JackknifeVariance {
    /// `(n-1)/n sum_i (beta_(i),j - beta_j)^2`.
    pub raw: DVector<f64>,
    /// Raw scaled by `1 - (1-gamma) alpha`, targeting `Var(beta_j)`.
    pub corrected: DVector<f64>,
    /// The correction factor applied.
    pub factor: f64,
    n: usize,
}

impl JackknifeVariance {
    /// Corrected variance on the sqrt(n) scale, for [`coordinate_inference`].
    pub fn model(&self) -> VarianceModel {
        VarianceModel {
            kind: VarianceKind::JackknifeCorrected,
            per_coordinate: &self.corrected * self.n as f64,
        }
    }
}

/// Jackknife variance of the CLS coordinates through Sherman-Morrison
/// rank-one downdates of `(X^T X)^{-1}`; one full factorization, then
/// O(p^2 + q^3) per left-out observation.
pub fn jackknife_variance(
    data: &Dataset,
    cs: &ConstraintSet,
    ratios: &AspectRatios,
) -> Result<JackknifeVariance> {
    let factor = ratios.moderate_margin()?;
    let (full, loo) = leave_one_out_cls(data, cs)?;
    let n = data.n();
    let p = data.p();
    let mut raw = DVector::zeros(p);
    for beta_i in &loo {
        for j in 0..p {
            let d = beta_i[j] - full[j];
            raw[j] += d * d;
        }
    }
    raw *= (n as f64 - 1.0) / n as f64;
    let corrected = &raw * factor;
    Ok(JackknifeVariance { raw, corrected, factor, n })
}

/// Jackknife variance of a unit-norm contrast `v^T beta`.
pub fn contrast_jackknife(
    data: &Dataset,
    cs: &ConstraintSet,
    ratios: &AspectRatios,
    v: &DVector<f64>,
) -> Result<(f64, f64)> {
    if v.len() != data.p() {
        return Err(Error::DimensionMismatch("contrast length mismatch".into()));
    }
    let factor = ratios.moderate_margin()?;
    let (full, loo) = leave_one_out_cls(data, cs)?;
    let center = v.dot(&full);
    let n = data.n() as f64;
    let raw = (n - 1.0) / n * loo.iter().map(|b| (v.dot(b) - center).powi(2)).sum::<f64>();
    Ok((raw, raw * factor))
}

/// Full-data CLS plus the n leave-one-out CLS fits.
///
/// The downdates reuse `N = (X^T X)^{-1}`, `W0 = N A^T`, and `S0 = A W0`;
/// each left-out row costs one p^2 matvec and one q x q factorization.
fn leave_one_out_cls(data: &Dataset, cs: &ConstraintSet) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let (n, p) = (data.n(), data.p());
    let q = cs.q();
    if cs.p() != p {
        return Err(Error::DimensionMismatch("constraint dimension mismatch".into()));
    }
    if n <= p + 1 {
        return Err(Error::NTooSmall { n, bound: p + 1 });
    }
    let x = data.x();
    let y = data.y();
    let xtx = x.transpose() * x;
    let chol = Cholesky::new(xtx.clone()).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    let cond = linalg::spd_condition_estimate(&xtx, &chol);
    if !cond.is_finite() || cond > linalg::CONDITION_CAP {
        return Err(Error::SingularGram { cond });
    }
    let n_inv = chol.inverse();
    let s_full = x.transpose() * y;
    let beta_ls = &n_inv * &s_full;

    let (w0, s0) = if q > 0 {
        let w0 = &n_inv * cs.a().transpose();
        let s0 = cs.a() * &w0;
        (w0, s0)
    } else {
        (DMatrix::zeros(p, 0), DMatrix::zeros(0, 0))
    };

    let full = if q > 0 {
        let s_chol = Cholesky::new(s0.clone()).ok_or(Error::RankDeficient { rank: 0, q })?;
        let gap = cs.a() * &beta_ls - cs.c();
        &beta_ls - &w0 * s_chol.solve(&gap)
    } else {
        beta_ls.clone()
    };

    let mut loo = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let yi = y[i];
        let u = &n_inv * &xi;
        let delta = 1.0 - xi.dot(&u);
        if delta <= 1e-12 {
            return Err(Error::SingularGram { cond: f64::INFINITY });
        }
        // beta_(i) = N_(i) (s - yi xi) with N_(i) = N + u u^T / delta.
        let ut_s = u.dot(&s_full) - yi * xi.dot(&u);
        let beta_i = &beta_ls - yi * &u + &u * (ut_s / delta);
        let beta_i = if q > 0 {
            let au = cs.a() * &u;
            let s_i = &s0 + &au * au.transpose() / delta;
            let s_chol = Cholesky::new(s_i).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
            let gap = cs.a() * &beta_i - cs.c();
            let z = s_chol.solve(&gap);
            let w_z = &w0 * &z + &u * (au.dot(&z) / delta);
            beta_i - w_z
        } else {
            beta_i
        };
        loo.push(beta_i);
    }
    Ok((full, loo))
}

/// Slow verification mode: n full constrained refits.
pub fn jackknife_variance_refit(
    data: &Dataset,
    cs: &ConstraintSet,
    ratios: &AspectRatios,
) -> Result<JackknifeVariance> {
    use crate::estimators::fit_cls;
    let factor = ratios.moderate_margin()?;
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(Error::NTooSmall { n, bound: p + 1 });
    }
    let full = fit_cls(data, cs)?.beta_hat;
    let mut raw = DVector::zeros(p);
    for i in 0..n {
        let x_i = data.x().clone().remove_row(i);
        let y_i = data.y().clone().remove_row(i);
        let sub = Dataset::new(x_i, y_i)?;
        let beta_i = fit_cls(&sub, cs)?.beta_hat;
        for j in 0..p {
            let d = beta_i[j] - full[j];
            raw[j] += d * d;
        }
    }
    raw *= (n as f64 - 1.0) / n as f64;
    let corrected = &raw * factor;
    Ok(JackknifeVariance { raw, corrected, factor, n })
}

/// Residual variance estimate `||y - X beta||^2 / (n - (p - q))`, treating
/// the constrained model as having `p - q` free parameters.
pub fn sigma_sq_estimate(data: &Dataset, beta: &DVector<f64>, q: usize) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    let df = n as i64 - (p as i64 - q as i64);
    if df <= 0 {
        return Err(Error::NTooSmall { n, bound: p - q });
    }
    let r = data.y() - data.x() * beta;
    Ok(r.norm_squared() / df as f64)
}

/// Build the per-coordinate inference table at confidence level `1 - level`,
/// with Holm-Bonferroni adjusted p-values and rejections at `level`.
pub fn coordinate_inference(
    est: &EstimateResult,
    vm: &VarianceModel,
    n: usize,
    level: f64,
) -> Result<Vec<CoordinateInference>> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::LevelOutOfRange(level));
    }
    let p = est.beta_hat.len();
    if vm.per_coordinate.len() != p {
        return Err(Error::DimensionMismatch("variance model length mismatch".into()));
    }
    let z = normal_quantile(1.0 - level / 2.0)?;
    let mut rows = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let estimate = est.beta_hat[j];
        let se = (vm.per_coordinate[j] / n as f64).sqrt();
        let (ci_low, ci_high, p_value) = if se == 0.0 {
            let p_value = if estimate != 0.0 { 0.0 } else { 1.0 };
            (estimate, estimate, p_value)
        } else {
            let stat = (estimate / se).abs();
            (
                estimate - z * se,
                estimate + z * se,
                2.0 * (1.0 - normal_cdf(stat)),
            )
        };
        p_values.push(p_value);
        rows.push(CoordinateInference {
            index: j,
            estimate,
            std_error: se,
            ci_low,
            ci_high,
            p_value,
            p_adjusted: p_value,
            rejected: false,
        });
    }
    let (adjusted, rejected) = holm_bonferroni(&p_values, level)?;
    for (row, (adj, rej)) in rows.iter_mut().zip(adjusted.into_iter().zip(rejected)) {
        row.p_adjusted = adj;
        row.rejected = rej;
    }
    Ok(rows)
}

/// Step-down Holm-Bonferroni. Rejection uses the strict rule
/// `p < level / (m - k + 1)`; adjusted p-values are the running maxima of
/// `(m - k + 1) p_(k)` clipped to one.
pub fn holm_bonferroni(p_values: &[f64], level: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::LevelOutOfRange(level));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::ConfigInvalid("p-values must lie in [0, 1]".into()));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut rejected = vec![false; m];
    let mut running_max = 0.0f64;
    let mut still_rejecting = true;
    for (k, &idx) in order.iter().enumerate() {
        let scale = (m - k) as f64;
        running_max = running_max.max(scale * p_values[idx]);
        adjusted[idx] = running_max.min(1.0);
        if still_rejecting && p_values[idx] < level / scale {
            rejected[idx] = true;
        } else {
            still_rejecting = false;
        }
    }
    Ok((adjusted, rejected))
}
