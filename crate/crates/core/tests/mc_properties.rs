//! Monte Carlo trend properties of the scenario runner: holdout prediction
//! error falling in the constraint count, constraint-agnostic OLS error,
//! and adherence of the simulated CLS error to the conditional trace risk.

use constrex_core::estimators::{fit_cls, EstimatorKind};
use constrex_core::sim::{
    generate_iteration, run_scenario, BetaPrior, CovarianceFamily, DrawMode, QRule, ScenarioConfig,
};
use constrex_core::stats::{mean, sample_variance};
use constrex_core::theory::conditional_minimax_risk;
use rayon::prelude::*;

fn sweep_style(iterations: usize, seed: u64, qs: Vec<usize>) -> ScenarioConfig {
    ScenarioConfig {
        name: "trend_sweep".into(),
        n: 200,
        ref_n: 1000,
        p_grid: vec![100],
        q_rule: QRule::Grid { values: qs },
        covariance: CovarianceFamily::Isotropic,
        sigma: 1.0,
        beta_prior: BetaPrior { mean: 5.0, sd: 5.0f64.sqrt() },
        iterations,
        seed,
        estimators: vec![EstimatorKind::Ols, EstimatorKind::Projected, EstimatorKind::Cls],
        glm: None,
        cheb: None,
        beta_mode: DrawMode::Redraw,
        reference_mode: DrawMode::Redraw,
        level: 0.05,
    }
}

#[test]
fn holdout_error_falls_and_ols_stays_flat() {
    let cfg = sweep_style(200, 71_001, vec![0, 50, 95]);
    let reports = run_scenario(&cfg).unwrap();
    let get = |q: usize, kind: EstimatorKind| {
        reports
            .iter()
            .find(|r| r.q == q && r.estimator == kind)
            .unwrap()
    };

    for kind in [EstimatorKind::Projected, EstimatorKind::Cls] {
        let low = get(0, kind).pred_mse_mean;
        let high = get(95, kind).pred_mse_mean;
        assert!(
            high < low,
            "{kind:?}: holdout error should fall with q ({high} vs {low})"
        );
    }

    // OLS is constraint-agnostic: equal in distribution across q.
    let a = get(0, EstimatorKind::Ols);
    let b = get(95, EstimatorKind::Ols);
    let se = (a.mse_sd.powi(2) / a.iters_ok as f64 + b.mse_sd.powi(2) / b.iters_ok as f64).sqrt();
    assert!(
        (a.mse_mean - b.mse_mean).abs() <= 4.0 * se,
        "OLS error moved with q: {} vs {} (se {se})",
        a.mse_mean,
        b.mse_mean
    );
}

#[test]
fn cheb_mom_runs_at_small_sample_scale() {
    // n = 10, N = 100, p = 20 under the equicorrelated covariance: the
    // order-3 enumeration stays inside the cost guard and produces finite
    // coordinates that honor the constraint set.
    let mut cfg = sweep_style(1, 73_001, vec![5]);
    cfg.n = 10;
    cfg.ref_n = 100;
    cfg.p_grid = vec![20];
    cfg.covariance = CovarianceFamily::Equicorrelated { rho: 0.5 };
    cfg.beta_prior = BetaPrior { mean: 0.0, sd: 1.0 };
    let sim = generate_iteration(&cfg, 20, 5, 0).unwrap();
    let cheb = constrex_core::highdim::ChebConfig::new((0.2, 5.0), 3).unwrap();
    let fit = constrex_core::highdim::fit_cheb_mom(&sim.data, &cheb, &sim.constraints).unwrap();
    assert!(fit.beta_hat.iter().all(|v| v.is_finite()));
    assert!(fit.feasibility_residual.unwrap() <= 1e-8);
}

#[test]
fn cls_error_tracks_conditional_trace_risk() {
    // Paired comparison on the same draws: the conditional risk is the
    // exact conditional mean of the CLS squared error.
    let cfg = sweep_style(300, 72_001, vec![50]);
    let (p, q) = (100usize, 50usize);
    let diffs: Vec<f64> = (0..cfg.iterations as u64)
        .into_par_iter()
        .map(|iter| {
            let sim = generate_iteration(&cfg, p, q, iter).unwrap();
            let fit = fit_cls(&sim.data, &sim.constraints).unwrap();
            let mse = (&fit.beta_hat - &sim.truth.beta_star).norm_squared();
            let risk = conditional_minimax_risk(sim.data.x(), &sim.constraints, 1.0).unwrap();
            mse - risk
        })
        .collect();
    let m = mean(&diffs);
    let se = (sample_variance(&diffs) / diffs.len() as f64).sqrt();
    assert!(
        m.abs() <= 3.0 * se,
        "paired difference {m} exceeds 3 standard errors ({se})"
    );
}
