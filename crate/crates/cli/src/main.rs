//! `constrex` command line: estimation, inference, theory evaluation,
//! scenario simulation, and raw U-statistic access.
//!
//! Exit codes: 0 success, 2 usage/parse errors, 3 numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use constrex_core::error::Error;
use constrex_core::estimators::{
    fit_cls_with, fit_ols, fit_oracle, fit_projected, fit_projected_oracle, EstimateResult,
    FitOptions,
};
use constrex_core::highdim::{fit_cheb_mom, fit_glm_projected, ChebConfig, GlmLink};
use constrex_core::inference::{
    cls_asymptotic_variance, coordinate_inference, jackknife_variance, sigma_sq_estimate,
};
use constrex_core::io;
use constrex_core::model::{
    realize_covariance, validate_constraints, AspectRatios, ConstraintSet, CovarianceSpec, Dataset,
    DEFAULT_RANK_TOL,
};
use constrex_core::sim::{run_scenario, McReport, ScenarioConfig};
use constrex_core::theory::{
    asymptotic_risk, conditional_minimax_risk, expected_gain, gain_eigen_weights,
};

#[derive(Parser)]
#[command(name = "constrex", version, about = "Constrained regression estimators, inference, and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator and write the coefficient vector.
    Estimate(EstimateArgs),
    /// Per-coordinate confidence intervals and Holm-adjusted tests.
    Infer(InferArgs),
    /// Closed-form risk and gain evaluation.
    Theory(TheoryArgs),
    /// Run a Monte Carlo scenario from a JSON config.
    Simulate(SimulateArgs),
    /// Evaluate one U-statistic moment (oracle testing hook).
    Ustat(UstatArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Ols,
    Projected,
    Cls,
    Oracle,
    ProjectedOracle,
    ChebMom,
    Glm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LinkArg {
    Identity,
    Logistic,
}

impl From<LinkArg> for GlmLink {
    fn from(l: LinkArg) -> Self {
        match l {
            LinkArg::Identity => GlmLink::Identity,
            LinkArg::Logistic => GlmLink::Logistic,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Design matrix CSV (n x p, no header).
    #[arg(long)]
    x: PathBuf,
    /// Outcome vector CSV (length n).
    #[arg(long)]
    y: PathBuf,
    /// Constraint matrix CSV (q x p); requires --c.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Constraint vector CSV (length q); requires --a.
    #[arg(long)]
    c: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Covariance matrix CSV (p x p); required for oracle-type kinds.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Output path for the fitted vector (single-column CSV).
    #[arg(long)]
    out: PathBuf,
    /// Replace a singular sample Gram matrix with the identity.
    #[arg(long, default_value_t = false)]
    fallback_identity_gram: bool,
    /// Chebyshev polynomial order for --kind cheb-mom.
    #[arg(long, default_value_t = 3)]
    cheb_order: usize,
    /// Lower spectral bound for --kind cheb-mom.
    #[arg(long, default_value_t = 0.2)]
    cheb_lo: f64,
    /// Upper spectral bound for --kind cheb-mom.
    #[arg(long, default_value_t = 5.0)]
    cheb_hi: f64,
    /// Link function for --kind glm.
    #[arg(long, value_enum, default_value_t = LinkArg::Identity)]
    link: LinkArg,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    c: Option<PathBuf>,
    /// Variance route: the asymptotic formula needs --sigma-matrix.
    #[arg(long, value_enum, default_value_t = VarianceArg::Jackknife)]
    variance: VarianceArg,
    /// Population covariance CSV for the asymptotic route.
    #[arg(long)]
    sigma_matrix: Option<PathBuf>,
    /// Known noise variance; estimated from residuals when absent.
    #[arg(long)]
    sigma_sq: Option<f64>,
    /// Family-wise level for intervals and Holm rejection.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    fallback_identity_gram: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VarianceArg {
    ClsAsymptotic,
    Jackknife,
}

#[derive(Args)]
struct TheoryArgs {
    /// JSON parameters: {"n":..,"p":..,"q":..,"sigma_sq":..,"covariance":{..}}.
    #[arg(long)]
    params: PathBuf,
    /// Optional constraint matrix CSV; defaults to the [I_q : 0] block.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Optional constraint vector CSV (zeros when absent).
    #[arg(long)]
    c: Option<PathBuf>,
    /// Optional design matrix CSV for the conditional trace risk and the
    /// gain mixture weights.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for the scenario runner (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct UstatArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Moment order (number of covariance factors).
    #[arg(long)]
    ell: usize,
    /// Zero-based coordinate index.
    #[arg(long)]
    k: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("constrex: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::SingularGram { .. }
        | Error::RankDeficient { .. }
        | Error::NotPositiveDefinite
        | Error::NoRoot { .. } => 3,
        _ => 2,
    }
}

fn verbose() -> bool {
    std::env::var("CONSTREX_LOG").map(|v| !v.is_empty()).unwrap_or(false)
}

fn log(msg: &str) {
    if verbose() {
        eprintln!("constrex: {msg}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Ustat(args) => cmd_ustat(args),
    }
}

fn load_constraints(
    a: &Option<PathBuf>,
    c: &Option<PathBuf>,
    p: usize,
) -> Result<Option<ConstraintSet>, Error> {
    match (a, c) {
        (None, None) => Ok(None),
        (Some(a_path), Some(c_path)) => {
            let a = io::read_matrix(a_path)?;
            let c = io::read_vector(c_path)?;
            if a.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "constraint matrix has {} columns but design has p = {p}",
                    a.ncols()
                )));
            }
            Ok(Some(validate_constraints(a, c, DEFAULT_RANK_TOL)?))
        }
        _ => Err(Error::ConfigInvalid(
            "constraint files must be given as a pair: --a with --c".into(),
        )),
    }
}

fn require_constraints(cs: Option<ConstraintSet>, kind: &str) -> Result<ConstraintSet, Error> {
    cs.ok_or_else(|| Error::ConfigInvalid(format!("estimator `{kind}` needs --a and --c")))
}

fn require_sigma(
    path: &Option<PathBuf>,
    p: usize,
    kind: &str,
) -> Result<nalgebra::DMatrix<f64>, Error> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid(format!("estimator `{kind}` needs --sigma")))?;
    let sigma = io::read_matrix(path)?;
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} but p = {p}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    Ok(sigma)
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let x = io::read_matrix(&args.x)?;
    let y = io::read_vector(&args.y)?;
    let p = x.ncols();
    let data = Dataset::new(x, y)?;
    let cs = load_constraints(&args.a, &args.c, p)?;
    let opts = FitOptions { identity_fallback: args.fallback_identity_gram };

    let fit: EstimateResult = match args.kind {
        KindArg::Ols => fit_ols(&data)?,
        KindArg::Projected => fit_projected(&data, &require_constraints(cs, "projected")?)?,
        KindArg::Cls => fit_cls_with(&data, &require_constraints(cs, "cls")?, &opts)?,
        KindArg::Oracle => fit_oracle(&data, &require_sigma(&args.sigma, p, "oracle")?)?,
        KindArg::ProjectedOracle => fit_projected_oracle(
            &data,
            &require_sigma(&args.sigma, p, "projected-oracle")?,
            &require_constraints(cs, "projected-oracle")?,
        )?,
        KindArg::ChebMom => {
            let cfg = ChebConfig::new((args.cheb_lo, args.cheb_hi), args.cheb_order)?;
            fit_cheb_mom(&data, &cfg, &require_constraints(cs, "cheb-mom")?)?
        }
        KindArg::Glm => fit_glm_projected(
            &data,
            &require_sigma(&args.sigma, p, "glm")?,
            args.link.into(),
            &require_constraints(cs, "glm")?,
        )?,
    };

    io::write_vector(&args.out, &fit.beta_hat)?;
    let sidecar = serde_json::json!({
        "kind": fit.kind,
        "gram_condition": fit.gram_condition,
        "feasibility_residual": fit.feasibility_residual,
    });
    std::fs::write(sidecar_path(&args.out), format!("{sidecar:#}\n"))?;
    log(&format!("wrote {} coefficients to {}", fit.beta_hat.len(), args.out.display()));
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn cmd_infer(args: InferArgs) -> Result<(), Error> {
    let x = io::read_matrix(&args.x)?;
    let y = io::read_vector(&args.y)?;
    let p = x.ncols();
    let n = x.nrows();
    let data = Dataset::new(x, y)?;
    let cs = load_constraints(&args.a, &args.c, p)?.unwrap_or_else(|| ConstraintSet::empty(p));
    let opts = FitOptions { identity_fallback: args.fallback_identity_gram };
    let fit = fit_cls_with(&data, &cs, &opts)?;
    let ratios = AspectRatios::from_dims(n, p, cs.q())?;
    let sigma_sq = match args.sigma_sq {
        Some(v) => v,
        None => sigma_sq_estimate(&data, &fit.beta_hat, cs.q())?,
    };
    log(&format!("noise variance: {sigma_sq}"));

    let vm = match args.variance {
        VarianceArg::ClsAsymptotic => {
            let sigma_path = args.sigma_matrix.as_ref().ok_or_else(|| {
                Error::ConfigInvalid(
                    "--variance cls-asymptotic needs --sigma-matrix; use --variance jackknife when only the sample is available"
                        .into(),
                )
            })?;
            let sigma = io::read_matrix(sigma_path)?;
            cls_asymptotic_variance(sigma_sq, &sigma, &cs, &ratios)?
        }
        VarianceArg::Jackknife => jackknife_variance(&data, &cs, &ratios)?.model(),
    };

    let rows = coordinate_inference(&fit, &vm, n, args.level)?;
    let mut out =
        String::from("index,estimate,std_error,ci_low,ci_high,p_value,p_adjusted,rejected\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.index,
            io::format_float(r.estimate),
            io::format_float(r.std_error),
            io::format_float(r.ci_low),
            io::format_float(r.ci_high),
            io::format_float(r.p_value),
            io::format_float(r.p_adjusted),
            r.rejected
        ));
    }
    std::fs::write(&args.out, out)?;
    Ok(())
}

#[derive(serde::Deserialize)]
struct TheoryParams {
    n: usize,
    p: usize,
    q: usize,
    sigma_sq: f64,
    covariance: CovarianceSpec,
}

fn cmd_theory(args: TheoryArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.params)?;
    let params: TheoryParams =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("params: {e}")))?;
    if params.covariance.dim() != params.p {
        return Err(Error::ConfigInvalid(format!(
            "covariance dimension {} but p = {}",
            params.covariance.dim(),
            params.p
        )));
    }
    let sigma = realize_covariance(&params.covariance)?;
    let ratios = AspectRatios::from_dims(params.n, params.p, params.q)?;

    let cs = match load_constraints(&args.a, &args.c, params.p)? {
        Some(cs) => cs,
        None if params.q == 0 => ConstraintSet::empty(params.p),
        None => {
            // Default block constraint [I_q : 0] with a zero target.
            let mut a = nalgebra::DMatrix::zeros(params.q, params.p);
            for i in 0..params.q {
                a[(i, i)] = 1.0;
            }
            validate_constraints(a, nalgebra::DVector::zeros(params.q), DEFAULT_RANK_TOL)?
        }
    };
    if cs.q() != params.q {
        return Err(Error::ConfigInvalid(format!(
            "constraint files have q = {} but params say q = {}",
            cs.q(),
            params.q
        )));
    }

    let mut risk = asymptotic_risk(params.sigma_sq, &sigma, &cs, &ratios)?;
    let gain = if ratios.alpha < 1.0 {
        Some(expected_gain(params.n, params.q, params.sigma_sq, &ratios)?)
    } else {
        None
    };
    let mut weights = None;
    if let Some(x_path) = &args.x {
        let x = io::read_matrix(x_path)?;
        risk.finite_sample_trace_risk = Some(conditional_minimax_risk(&x, &cs, params.sigma_sq)?);
        if cs.q() > 0 {
            weights = Some(gain_eigen_weights(&x, &cs)?);
        }
    }

    let report = serde_json::json!({
        "risk": risk,
        "expected_gain": gain,
        "gain_weights": weights,
    });
    let rendered = format!("{report:#}\n");
    match &args.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    log(&format!("scenario `{}`: {} grid points", cfg.name, cfg.grid().len()));

    let reports = if args.threads == 0 {
        run_scenario(&cfg)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build()
            .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
        pool.install(|| run_scenario(&cfg))?
    };

    let mut out = String::from(McReport::CSV_HEADER);
    out.push('\n');
    for rep in &reports {
        out.push_str(&rep.csv_row());
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    Ok(())
}

fn cmd_ustat(args: UstatArgs) -> Result<(), Error> {
    let x = io::read_matrix(&args.x)?;
    let y = io::read_vector(&args.y)?;
    let data = Dataset::new(x, y)?;
    let value = constrex_core::highdim::ustat_moment(&data, args.ell, args.k)?;
    println!("{}", io::format_float(value));
    Ok(())
}
