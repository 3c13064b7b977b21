//! Estimation engine: least squares, fixed-effect absorption, clustered and
//! HAC inference, variance decomposition, rolling and Fama-MacBeth
//! regressions, and portfolio sorts.

pub mod cluster;
pub mod fama_macbeth;
pub mod fixed_effects;
pub mod newey_west;
pub mod ols;
pub mod panel;
pub mod portfolio;
pub mod quantile;
pub mod rolling;
pub mod table;
pub mod vardecomp;

pub use cluster::{cluster_robust_se, ClusterVcov};
pub use fama_macbeth::{annualize_exposure, fama_macbeth, trim_regressors, AnnualExposure, CrossSection, FmbResult};
pub use fixed_effects::{absorb_fixed_effects, Absorbed, Factor, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use newey_west::{bartlett_weight, nw_mean_se, nw_ols_vcov};
pub use ols::{ols, OlsFit};
pub use panel::{panel_regression, FeSpec, PanelDataset, RegressionResult, RegressionSpec};
pub use portfolio::{
    five_factor_alpha, quintile_assign, quintile_portfolios, read_factors_csv, AlphaResult, FactorRow, PortfolioMonth,
    PortfolioResult, FACTOR_NAMES,
};
pub use quantile::{trim, winsorize, Bounds};
pub use table::{stars, TextTable};
pub use rolling::{rolling_regression, RollingRow};
pub use vardecomp::{variance_decomposition, VarianceDecomposition};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("no usable rows")]
    NoUsableRows,
    #[error("{rows} rows cannot identify {cols} coefficients")]
    TooFewRows { rows: usize, cols: usize },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("fixed-effect absorption did not converge after {iterations} iterations (last change {last_delta:e})")]
    Convergence { iterations: usize, last_delta: f64 },
    #[error("inference: {0}")]
    Inference(String),
    #[error("variance decomposition: {0}")]
    Decomposition(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("portfolio formation: {0}")]
    Formation(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
