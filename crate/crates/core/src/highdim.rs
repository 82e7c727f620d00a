//! High-dimensional estimators for the unknown- and known-Sigma regimes:
//! the Chebyshev method-of-moments estimator driven by exact U-statistics,
//! and the projected GLM moment estimator.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{orthogonal_projector, EstimateResult, EstimatorKind};
use crate::linalg;
use crate::model::{ConstraintSet, Dataset};
use crate::stats::{expit_prime, gauss_hermite};

/// Enumeration cost guard for the U-statistics: `n^(ell+1)` ordered tuples.
pub const USTAT_ENUMERATION_GUARD: f64 = 1e8;

/// Default polynomial order for the Chebyshev expansion of `1/t`.
pub const DEFAULT_CHEB_ORDER: usize = 3;

/// Default spectral enclosure for the covariance spectrum.
pub const DEFAULT_SPECTRAL_BOUNDS: (f64, f64) = (0.2, 5.0);

/// Monomial-basis coefficients `c_0..c_J` with
/// `sum_l c_l t^l ~ 1/t` on `[a, b]`, from the truncated Chebyshev series.
pub fn cheb_coefficients(spectral_bounds: (f64, f64), order_j: usize) -> Result<DVector<f64>> {
    let (a, b) = spectral_bounds;
    if !(a > 0.0 && a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidBounds { a, b });
    }
    // Chebyshev-basis coefficients by Gauss-Chebyshev quadrature.
    let m = 128usize;
    let mut cheb = vec![0.0f64; order_j + 1];
    for node in 0..m {
        let theta = std::f64::consts::PI * (node as f64 + 0.5) / m as f64;
        let u = theta.cos();
        let t = 0.5 * ((b - a) * u + (a + b));
        let f = 1.0 / t;
        for (k, ck) in cheb.iter_mut().enumerate() {
            *ck += f * (k as f64 * theta).cos();
        }
    }
    for (k, ck) in cheb.iter_mut().enumerate() {
        *ck *= if k == 0 { 1.0 } else { 2.0 } / m as f64;
    }
    // Re-expand T_k((2t - (a+b)) / (b-a)) in powers of t.
    let alpha = 2.0 / (b - a);
    let beta = -(a + b) / (b - a);
    let mut t_prev = vec![1.0f64]; // T_0
    let mut t_curr = vec![beta, alpha]; // T_1
    let mut monomial = vec![0.0f64; order_j + 1];
    monomial[0] += cheb[0];
    if order_j >= 1 {
        add_scaled(&mut monomial, &t_curr, cheb[1]);
    }
    for k in 2..=order_j {
        // T_{k} = 2 (alpha t + beta) T_{k-1} - T_{k-2}
        let mut next = vec![0.0f64; t_curr.len() + 1];
        for (i, &c) in t_curr.iter().enumerate() {
            next[i + 1] += 2.0 * alpha * c;
            next[i] += 2.0 * beta * c;
        }
        for (i, &c) in t_prev.iter().enumerate() {
            next[i] -= c;
        }
        add_scaled(&mut monomial, &next, cheb[k]);
        t_prev = t_curr;
        t_curr = next;
    }
    Ok(DVector::from_vec(monomial))
}

fn add_scaled(acc: &mut [f64], poly: &[f64], scale: f64) {
    for (i, &c) in poly.iter().enumerate() {
        acc[i] += scale * c;
    }
}

/// Configuration of the Chebyshev method-of-moments estimator.
#[derive(Clone, Debug)]
pub struct ChebConfig {
    pub order_j: usize,
    pub spectral_bounds: (f64, f64),
    pub coefficients: DVector<f64>,
}

impl ChebConfig {
    /// Compute the coefficients for the given enclosure and order.
    pub fn new(spectral_bounds: (f64, f64), order_j: usize) -> Result<Self> {
        let coefficients = cheb_coefficients(spectral_bounds, order_j)?;
        Ok(Self { order_j, spectral_bounds, coefficients })
    }

    /// Use caller-supplied monomial coefficients.
    pub fn with_coefficients(spectral_bounds: (f64, f64), coefficients: DVector<f64>) -> Result<Self> {
        let (a, b) = spectral_bounds;
        if !(a > 0.0 && a < b) {
            return Err(Error::InvalidBounds { a, b });
        }
        if coefficients.is_empty() {
            return Err(Error::ConfigInvalid("need at least one coefficient".into()));
        }
        Ok(Self {
            order_j: coefficients.len() - 1,
            spectral_bounds,
            coefficients,
        })
    }

    /// Sup-norm error of the polynomial against `1/t` on an evaluation grid.
    pub fn approximation_error(&self, grid_points: usize) -> f64 {
        let (a, b) = self.spectral_bounds;
        let mut worst = 0.0f64;
        for g in 0..grid_points {
            let t = a + (b - a) * g as f64 / (grid_points - 1) as f64;
            let mut val = 0.0;
            for l in (0..self.coefficients.len()).rev() {
                val = val * t + self.coefficients[l];
            }
            worst = worst.max((val - 1.0 / t).abs());
        }
        worst
    }
}

/// Exact order-`ell` U-statistic
/// `((n-(ell+1))!/n!) sum y_{i1} X_{i1}^T {prod X_{is} X_{is}^T} e_k`
/// by enumeration over ordered tuples of distinct indices.
pub fn ustat_moment(data: &Dataset, ell: usize, k: usize) -> Result<f64> {
    let n = data.n();
    let p = data.p();
    if k >= p {
        return Err(Error::DimensionMismatch(format!("coordinate {k} out of range (p = {p})")));
    }
    if n < ell + 1 {
        return Err(Error::NTooSmall { n, bound: ell });
    }
    let cost = (n as f64).powi(ell as i32 + 1);
    if cost > USTAT_ENUMERATION_GUARD {
        return Err(Error::TooLarge { cost, guard: USTAT_ENUMERATION_GUARD });
    }
    let rows: Vec<DVector<f64>> = (0..n).map(|i| data.x().row(i).transpose()).collect();
    let y = data.y();

    let mut e_k = DVector::zeros(p);
    e_k[k] = 1.0;
    let mut used = vec![false; n];
    let sum = tuple_sum(&rows, y, &mut used, ell, &e_k);

    let mut scale = 1.0f64;
    for s in 0..=ell {
        scale *= (n - s) as f64;
    }
    Ok(sum / scale)
}

/// Recurse over the rank-one factors; at depth zero sum the `y X^T w` head
/// term over the remaining free index.
fn tuple_sum(
    rows: &[DVector<f64>],
    y: &DVector<f64>,
    used: &mut [bool],
    depth: usize,
    w: &DVector<f64>,
) -> f64 {
    if depth == 0 {
        let mut total = 0.0;
        for (i, row) in rows.iter().enumerate() {
            if !used[i] {
                total += y[i] * row.dot(w);
            }
        }
        return total;
    }
    let mut total = 0.0;
    for i in 0..rows.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let w_next = &rows[i] * rows[i].dot(w);
        total += tuple_sum(rows, y, used, depth - 1, &w_next);
        used[i] = false;
    }
    total
}

/// Chebyshev method-of-moments estimator: per coordinate,
/// `sum_l c_l ustat(l, k)`, then the affine projection into the constraints.
pub fn fit_cheb_mom(data: &Dataset, cfg: &ChebConfig, cs: &ConstraintSet) -> Result<EstimateResult> {
    let p = data.p();
    if cs.p() != p {
        return Err(Error::DimensionMismatch("constraint dimension mismatch".into()));
    }
    let mut beta = DVector::zeros(p);
    for k in 0..p {
        let mut val = 0.0;
        for l in 0..=cfg.order_j {
            val += cfg.coefficients[l] * ustat_moment(data, l, k)?;
        }
        beta[k] = val;
    }
    let proj = orthogonal_projector(cs)?;
    let beta = proj.project(&beta);
    let residual = cs.residual(&beta);
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::ChebMom,
        gram_condition: 0.0,
        feasibility_residual: Some(residual),
    })
}

/// GLM link specification for the moment estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmLink {
    Identity,
    Logistic,
}

const GH_NODES: usize = 64;
const GL_NODES: usize = 320;
// Half-width for the direct-domain rule; expit' is ~6e-16 at |z| = 35.
const GL_HALF_WIDTH: f64 = 35.0;

fn gh_cache() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| gauss_hermite(GH_NODES))
}

fn gl_cache() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| crate::stats::gauss_legendre(GL_NODES))
}

fn logistic_f_gauss_hermite(t: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let scale = (2.0 * t).sqrt();
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        sum += w * expit_prime(scale * x);
    }
    sum / std::f64::consts::PI.sqrt()
}

fn logistic_f_direct(t: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    // integral expit'(z) phi_t(z) dz on [-L, L]; the integrand scale is
    // bounded below by 1 once t >= 1, which the fixed rule resolves.
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        let z = GL_HALF_WIDTH * x;
        sum += w * expit_prime(z) * (-z * z / (2.0 * t)).exp();
    }
    sum * GL_HALF_WIDTH * norm
}

/// `f(t) = E[g'(Z)]` with `Z ~ N(0, t)`.
///
/// The logistic case integrates by Gauss-Hermite for `t <= 1`; above that
/// the integrand is too peaked for the Hermite weight at a fixed node
/// count, so the quadrature switches to a direct-domain Gauss rule with the
/// same self-consistency guarantee.
pub fn glm_f(link: GlmLink, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeVariance(t));
    }
    match link {
        GlmLink::Identity => Ok(1.0),
        GlmLink::Logistic => {
            if t == 0.0 {
                return Ok(0.25);
            }
            if t <= 1.0 {
                let (nodes, weights) = gh_cache();
                Ok(logistic_f_gauss_hermite(t, nodes, weights))
            } else {
                let (nodes, weights) = gl_cache();
                Ok(logistic_f_direct(t, nodes, weights))
            }
        }
    }
}

/// Invert `u = f(t)^2 t` for `t`; monotone bisection after bracketing by
/// doubling, capped at `t_max = 1e6`.
///
/// The identity link maps `u` straight through (clamped at zero on noise
/// draws); its `f` is constant, so the value never feeds the estimator.
pub fn glm_solve_q(link: GlmLink, u: f64) -> Result<f64> {
    match link {
        GlmLink::Identity => Ok(u.max(0.0)),
        GlmLink::Logistic => {
            if u < 0.0 {
                return Err(Error::NoRoot { u });
            }
            if u == 0.0 {
                return Ok(0.0);
            }
            let t_max = 1e6;
            let g = |t: f64| glm_f(GlmLink::Logistic, t).map(|f| f * f * t);
            let mut hi = 1.0;
            while g(hi)? < u {
                hi *= 2.0;
                if hi > t_max {
                    return Err(Error::NoRoot { u });
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid)? < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Projected GLM moment estimator: the off-diagonal pair U-statistic pins
/// the signal strength `U`, the cross moment pins the direction `V_j`, and
/// `beta_j = V_j / f(h(U))` is followed by the affine projection.
pub fn fit_glm_projected(
    data: &Dataset,
    sigma_matrix: &DMatrix<f64>,
    link: GlmLink,
    cs: &ConstraintSet,
) -> Result<EstimateResult> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(Error::NTooSmall { n, bound: 1 });
    }
    if sigma_matrix.nrows() != p || cs.p() != p {
        return Err(Error::DimensionMismatch("glm inputs disagree on p".into()));
    }
    let chol = linalg::cholesky(sigma_matrix)?;
    let cond = linalg::spd_condition_estimate(sigma_matrix, &chol);
    let v_hat = chol.solve(&data.cross_moment());

    // U-hat = (y^T X Sigma^{-1} X^T y - sum_i y_i^2 x_i^T Sigma^{-1} x_i) / (n (n-1))
    let xty = data.x().transpose() * data.y();
    let solved = chol.solve(&xty);
    let total = xty.dot(&solved);
    let k_mat = chol.solve(&data.x().transpose());
    let mut diag = 0.0;
    for i in 0..n {
        let yi = data.y()[i];
        diag += yi * yi * data.x().row(i).transpose().dot(&k_mat.column(i).into_owned());
    }
    let u_hat = (total - diag) / (n as f64 * (n as f64 - 1.0));

    let q_hat = glm_solve_q(link, u_hat)?;
    let f_q = glm_f(link, q_hat)?;
    let beta = v_hat / f_q;

    let proj = orthogonal_projector(cs)?;
    let beta = proj.project(&beta);
    let residual = cs.residual(&beta);
    Ok(EstimateResult {
        beta_hat: beta,
        kind: EstimatorKind::Glm,
        gram_condition: cond,
        feasibility_residual: Some(residual),
    })
}
