//! Population size estimation from incomplete lists: dual- and
//! multiple-systems estimators, Chapman-type finite-sample corrections via
//! the Moore-Penrose intercept row, and a Monte Carlo study harness.

pub mod adjust;
pub mod approx;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod harness;
pub mod patterns;
pub mod scenario;

pub use adjust::{adjusted_counts, chapman_adjusted_counts, z_vector, ZVector};
pub use approx::{
    compare_expansions, taylor_bias_identity_check, ApproxReport, BiasIdentityReport,
};
pub use error::{Error, Result};
pub use estimators::{estimate, estimate_all, EstimateResult, Estimator, Status};
pub use glm::{fit_firth, fit_ml, FitResult};
pub use harness::{apply_failure_policy, run_study, t_test_vs_n, SimSummary, SummaryStats};
pub use patterns::{
    build_design, canonical_patterns, CountTable, DesignMatrix, InclusionPattern, ModelSpec,
};
pub use scenario::{
    builtin_scenarios, parse_scenarios, sample_table, solve_cell_probabilities, CellProbabilities,
    RandomStream, ScenarioSpec,
};
