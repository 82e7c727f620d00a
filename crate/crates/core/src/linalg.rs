//! Thin dense linear-algebra helpers shared across the crate.
//!
//! Everything here wraps nalgebra factorizations; no explicit inverse is
//! formed unless a full p x p inverse is genuinely needed downstream
//! (trace functionals, leave-one-out downdates).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Condition number above which a Gram matrix is declared singular.
pub const CONDITION_CAP: f64 = 1e12;

/// Cholesky-factor an SPD matrix, mapping failure to `NotPositiveDefinite`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)
}

/// Estimate the 2-norm condition number of a symmetric positive definite
/// matrix from a few power / inverse-power iterations on its Cholesky factor.
///
/// Accurate to a few digits, which is all the 1e12 singularity cap needs.
pub fn spd_condition_estimate(m: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let p = m.nrows();
    if p == 0 {
        return 1.0;
    }
    if p == 1 {
        return 1.0;
    }
    let mut v = DVector::from_fn(p, |i, _| 1.0 + (i as f64) / (p as f64));
    v /= v.norm();
    let mut lambda_max = 0.0f64;
    for _ in 0..30 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda_max).abs() <= 1e-3 * next {
            lambda_max = next;
            break;
        }
        lambda_max = next;
    }
    let mut u = DVector::from_fn(p, |i, _| 1.0 - (i as f64) / (2.0 * p as f64));
    u /= u.norm();
    let mut inv_lambda_min = 0.0f64;
    for _ in 0..30 {
        let w = chol.solve(&u);
        let norm = w.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        let next = norm;
        u = w / norm;
        if (next - inv_lambda_min).abs() <= 1e-3 * next {
            inv_lambda_min = next;
            break;
        }
        inv_lambda_min = next;
    }
    lambda_max * inv_lambda_min
}

/// Cholesky factorization of a Gram-type matrix with the singularity cap
/// applied. Returns the factorization and the condition estimate.
pub fn gram_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::SingularGram { cond: f64::INFINITY })?;
    let cond = spd_condition_estimate(m, &chol);
    if !cond.is_finite() || cond > CONDITION_CAP {
        return Err(Error::SingularGram { cond });
    }
    Ok((chol, cond))
}

/// Orthonormal basis of the null space of `a` (q x p, q < p), as the
/// p x (p - q) matrix of right singular vectors with vanishing singular
/// value, obtained from the symmetric eigendecomposition of a^T a.
pub fn null_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let p = a.ncols();
    let q = a.nrows();
    if q == 0 {
        return DMatrix::identity(p, p);
    }
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut basis = DMatrix::zeros(p, p - q);
    for (col, &i) in idx.iter().take(p - q).enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(i));
    }
    basis
}

/// Symmetric square root of an SPD matrix via eigendecomposition.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let sqrt_vals = DVector::from_iterator(m.nrows(), eig.eigenvalues.iter().map(|l| l.sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

/// Trace of the inverse of an SPD matrix through its Cholesky factor.
pub fn trace_of_inverse(chol: &Cholesky<f64, Dyn>, p: usize) -> f64 {
    let inv = chol.inverse();
    let mut tr = 0.0;
    for j in 0..p {
        tr += inv[(j, j)];
    }
    tr
}

/// Eigenvalues of a matrix after symmetrization, sorted descending.
pub fn symmetrized_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut vals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Max absolute entry of a vector.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Max absolute entry of a matrix.
pub fn mat_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
