//! Constrained linear regression in the proportional-asymptotics regime:
//! estimators under affine constraints, closed-form risk and gain formulas,
//! asymptotic and jackknife inference with multiplicity control, and a
//! reproducible Monte Carlo scenario runner.

pub mod error;
pub mod estimators;
pub mod highdim;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use estimators::{EstimateResult, EstimatorKind, FitOptions, ProjectorPair};
pub use highdim::{ChebConfig, GlmLink};
pub use inference::{CoordinateInference, JackknifeVariance, VarianceKind, VarianceModel};
pub use model::{
    AspectRatios, ConstraintSet, CovarianceSpec, Dataset, TrueModel, DEFAULT_RANK_TOL,
    FEASIBILITY_TOL,
};
pub use sim::{McReport, ScenarioConfig, SimIteration};
pub use theory::{GainReport, RiskReport};
