//! Scalar statistical routines: normal CDF and quantile, Kolmogorov-Smirnov
//! statistics, Gauss-Hermite quadrature nodes, and the logistic link helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile, Wichura's AS 241 rational approximation
/// (absolute error below 1e-15 on (0, 1)).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
        return Err(Error::LevelOutOfRange(p));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = poly(
            r,
            &[
                3.387_132_872_796_366_608e0,
                1.331_416_678_917_843_774_5e2,
                1.971_590_950_306_551_442_7e3,
                1.373_169_376_550_946_112_5e4,
                4.592_195_393_154_987_145_7e4,
                6.726_577_092_700_870_085_3e4,
                3.343_057_558_358_812_810_5e4,
                2.509_080_928_730_122_672_7e3,
            ],
        );
        let den = poly(
            r,
            &[
                1.0,
                4.231_333_070_160_091_125_2e1,
                6.871_870_074_920_579_083e2,
                5.394_196_021_424_751_107_7e3,
                2.121_379_430_158_659_586_7e4,
                3.930_789_580_009_271_061e4,
                2.872_908_573_572_194_267_4e4,
                5.226_495_278_852_854_561e3,
            ],
        );
        return Ok(q * num / den);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = poly(
            r,
            &[
                1.423_437_110_749_683_577_3e0,
                4.630_337_846_156_545_295_9e0,
                5.769_497_221_460_691_405_5e0,
                3.647_848_324_763_204_605e0,
                1.270_458_252_452_368_382_6e0,
                2.417_807_251_774_506_117_7e-1,
                2.272_384_498_926_918_458_3e-2,
                7.745_450_142_783_414_076_4e-4,
            ],
        );
        let den = poly(
            r,
            &[
                1.0,
                2.053_191_626_637_758_821_9e0,
                1.676_384_830_183_803_849_4e0,
                6.897_673_349_851_000_045_5e-1,
                1.481_039_764_274_800_745_9e-1,
                1.519_866_656_361_645_719_7e-2,
                5.475_938_084_995_344_946e-4,
                1.050_750_071_644_416_843_2e-9,
            ],
        );
        num / den
    } else {
        let r = r - 5.0;
        let num = poly(
            r,
            &[
                6.657_904_643_501_103_777_2e0,
                5.463_784_911_164_114_369_9e0,
                1.784_826_539_917_291_335_8e0,
                2.965_605_718_285_048_912_3e-1,
                2.653_218_952_657_612_309_3e-2,
                1.242_660_947_388_078_438_6e-3,
                2.711_555_568_743_487_578_2e-5,
                2.010_334_399_292_288_132_6e-7,
            ],
        );
        let den = poly(
            r,
            &[
                1.0,
                5.998_322_065_558_879_376_9e-1,
                1.369_298_809_227_358_053_1e-1,
                1.487_536_129_085_061_485_2e-2,
                7.868_691_311_456_132_591e-4,
                1.846_318_317_510_054_681_8e-5,
                1.421_511_758_316_445_888_7e-7,
                2.044_263_103_389_939_785_6e-15,
            ],
        );
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

fn poly(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Complementary CDF of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 1e-8 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta dual form, fast for small lambda.
        let v = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 0..20 {
            let odd = (2 * k + 1) as f64;
            sum += (-odd * odd * v).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            sum += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Critical value of the one-sample KS statistic at level `alpha` and
/// sample size `n` (asymptotic `K_alpha / sqrt(n)`).
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    let mut lo = 0.2;
    let mut hi = 4.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / (n as f64).sqrt()
}

/// One-sample KS statistic of `samples` against the standard normal law.
pub fn ks_statistic_normal(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = normal_cdf(x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Two-sample KS statistic; both inputs are sorted in place.
pub fn ks_statistic_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let (xa, xb) = (a[i], b[j]);
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value for a two-sample KS statistic (Stephens' correction).
pub fn ks_two_sample_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let sqrt_ne = ne.sqrt();
    kolmogorov_sf((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d)
}

/// Gauss-Hermite nodes and weights for `integral f(x) exp(-x^2) dx`,
/// computed from the symmetric tridiagonal Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let w = mu0 * eig.eigenvectors[(0, j)] * eig.eigenvectors[(0, j)];
            (node, w)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss-Legendre nodes and weights for `integral_{-1}^{1} f(x) dx`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let node = eig.eigenvalues[j];
            let w = 2.0 * eig.eigenvectors[(0, j)] * eig.eigenvectors[(0, j)];
            (node, w)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    pairs.into_iter().unzip()
}

/// Logistic function.
pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function.
pub fn expit_prime(z: f64) -> f64 {
    let s = expit(z);
    s * (1.0 - s)
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean of squared prediction residuals `(y - x beta)^2`.
pub fn prediction_mse(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let r = y - x * beta;
    r.norm_squared() / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_round_trips_cdf() {
        for &p in &[1e-9, 1e-4, 0.025, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-6] {
            let z = normal_quantile(p).unwrap();
            assert_relative_eq!(normal_cdf(z), p, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_reference_values() {
        assert_relative_eq!(normal_quantile(0.975).unwrap(), 1.959963984540054, epsilon = 1e-9);
        assert_relative_eq!(normal_quantile(0.995).unwrap(), 2.5758293035489004, epsilon = 1e-9);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn kolmogorov_reference() {
        // Q(0.82757...) ~= 0.5 (median of the Kolmogorov law).
        assert_relative_eq!(kolmogorov_sf(0.8275735551899077), 0.5, epsilon = 1e-6);
        // Classic 5% and 1% points.
        assert_relative_eq!(kolmogorov_sf(1.3581), 0.05, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_sf(1.6276), 0.01, epsilon = 1e-4);
    }

    #[test]
    fn ks_critical_inverts_sf() {
        let d = ks_critical_value(0.01, 2000);
        assert_relative_eq!(kolmogorov_sf(d * (2000.0f64).sqrt()), 0.01, epsilon = 1e-6);
    }

    #[test]
    fn gauss_hermite_integrates_polynomials() {
        let (x, w) = gauss_hermite(64);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        // integral x^2 e^{-x^2} = sqrt(pi)/2
        let m2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        assert_relative_eq!(m2, std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn expit_prime_at_zero() {
        assert_eq!(expit_prime(0.0), 0.25);
    }
}
