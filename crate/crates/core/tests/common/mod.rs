//! Shared oracles for the integration and acceptance suites. These stay
//! independent of the library's solve paths: the KKT oracle goes through a
//! dense LU on the stacked system, and the U-statistic oracle enumerates
//! index tuples with an odometer.

// Each test binary compiles its own copy and uses a subset.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use constrex_core::model::{validate_constraints, ConstraintSet, Dataset};

/// Solve the equality-constrained least squares problem through the
/// stationarity-plus-feasibility system
/// `[[X^T X, A^T], [A, 0]] [beta; lambda] = [X^T y; c]`.
pub fn kkt_oracle(x: &DMatrix<f64>, y: &DVector<f64>, a: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let (p, q) = (x.ncols(), a.nrows());
    let mut system = DMatrix::zeros(p + q, p + q);
    let xtx = x.transpose() * x;
    system.view_mut((0, 0), (p, p)).copy_from(&xtx);
    system.view_mut((0, p), (p, q)).copy_from(&a.transpose());
    system.view_mut((p, 0), (q, p)).copy_from(a);
    let mut rhs = DVector::zeros(p + q);
    rhs.rows_mut(0, p).copy_from(&(x.transpose() * y));
    rhs.rows_mut(p, q).copy_from(c);
    let sol = system.lu().solve(&rhs).expect("KKT system is nonsingular");
    sol.rows(0, p).into_owned()
}

/// Brute-force order-`ell` U-statistic by odometer enumeration of all
/// ordered tuples of distinct indices; scalar arithmetic only.
pub fn ustat_brute_force(x: &DMatrix<f64>, y: &DVector<f64>, ell: usize, k: usize) -> f64 {
    let n = x.nrows();
    let p = x.ncols();
    let len = ell + 1;
    let mut idx = vec![0usize; len];
    let mut total = 0.0f64;
    loop {
        let distinct = (0..len).all(|a| (a + 1..len).all(|b| idx[a] != idx[b]));
        if distinct {
            // w = prod_{s=2..ell+1} x_{i_s} x_{i_s}^T applied to e_k.
            let mut w = vec![0.0f64; p];
            w[k] = 1.0;
            for s in (1..len).rev() {
                let i = idx[s];
                let mut dot = 0.0;
                for j in 0..p {
                    dot += x[(i, j)] * w[j];
                }
                for j in 0..p {
                    w[j] = x[(i, j)] * dot;
                }
            }
            let i1 = idx[0];
            let mut head = 0.0;
            for j in 0..p {
                head += x[(i1, j)] * w[j];
            }
            total += y[i1] * head;
        }
        // advance the odometer
        let mut pos = 0;
        loop {
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
            if pos == len {
                let mut scale = 1.0f64;
                for s in 0..len {
                    scale *= (n - s) as f64;
                }
                return total / scale;
            }
        }
    }
}

pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random instance with a feasible truth: `c = A beta_star`, `y = X beta* + sigma eps`.
pub struct FeasibleInstance {
    pub data: Dataset,
    pub cs: ConstraintSet,
    pub beta_star: DVector<f64>,
}

pub fn random_feasible_instance(
    seed: u64,
    n: usize,
    p: usize,
    q: usize,
    sigma: f64,
) -> FeasibleInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = standard_normal_matrix(&mut rng, n, p);
    let beta_star = standard_normal_vector(&mut rng, p);
    let y = &x * &beta_star + standard_normal_vector(&mut rng, n) * sigma;
    let (cs, _) = loop {
        let a = standard_normal_matrix(&mut rng, q.max(1), p);
        let a = a.rows(0, q).into_owned();
        let c = &a * &beta_star;
        match validate_constraints(a, c, 1e-10) {
            Ok(cs) => break (cs, ()),
            Err(_) => continue,
        }
    };
    FeasibleInstance {
        data: Dataset::new(x, y).unwrap(),
        cs,
        beta_star,
    }
}

/// The fixed 6 x 3 instance with one sum constraint used across suites.
pub fn fixed_kkt_instance() -> (Dataset, ConstraintSet) {
    let x = DMatrix::from_row_slice(
        6,
        3,
        &[
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            1.0, 1.0, 0.0, //
            0.0, 1.0, 1.0, //
            1.0, 0.0, 1.0,
        ],
    );
    let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 3.0, 5.0, 4.0]);
    let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
    let c = DVector::from_vec(vec![6.0]);
    let cs = validate_constraints(a, c, 1e-10).unwrap();
    (Dataset::new(x, y).unwrap(), cs)
}
