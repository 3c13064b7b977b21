//! Firm-period panels and the fixed-effect regression built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::cluster::cluster_robust_se;
use super::fixed_effects::{absorb_fixed_effects, Factor, DEFAULT_MAX_ITER, DEFAULT_TOL};
use super::ols::ols;
use super::quantile::winsorize;
use super::EstimationError;

/// Name under which the firm key is exposed as a categorical column.
pub const FIRM: &str = "firm";
/// Name under which the period key is exposed as a categorical column.
pub const TIME: &str = "time";

/// Relative norm below which a regressor counts as swallowed by the fixed effects.
const ABSORBED_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelDataset {
    firm: Vec<String>,
    period: Vec<String>,
    numeric: BTreeMap<String, Vec<f64>>,
    categorical: BTreeMap<String, Vec<Option<String>>>,
}

impl PanelDataset {
    /// Keys must be unique (firm, period) pairs.
    pub fn new(firm: Vec<String>, period: Vec<String>) -> Result<Self, EstimationError> {
        if firm.len() != period.len() {
            return Err(EstimationError::Invalid("firm and period keys differ in length".into()));
        }
        let mut seen = BTreeSet::new();
        for (f, p) in firm.iter().zip(&period) {
            if !seen.insert((f, p)) {
                return Err(EstimationError::Invalid(format!("duplicate key ({f}, {p})")));
            }
        }
        Ok(Self { firm, period, ..Self::default() })
    }

    pub fn len(&self) -> usize {
        self.firm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firm.is_empty()
    }

    pub fn firms(&self) -> &[String] {
        &self.firm
    }

    pub fn periods(&self) -> &[String] {
        &self.period
    }

    pub fn row_of(&self, firm: &str, period: &str) -> Option<usize> {
        self.firm.iter().zip(&self.period).position(|(f, p)| f == firm && p == period)
    }

    /// Missing values are NaN.
    pub fn add_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<(), EstimationError> {
        let name = name.into();
        if values.len() != self.len() {
            return Err(EstimationError::Invalid(format!("column {name} has {} rows, expected {}", values.len(), self.len())));
        }
        self.numeric.insert(name, values);
        Ok(())
    }

    pub fn add_categorical(&mut self, name: impl Into<String>, values: Vec<Option<String>>) -> Result<(), EstimationError> {
        let name = name.into();
        if values.len() != self.len() {
            return Err(EstimationError::Invalid(format!("column {name} has {} rows, expected {}", values.len(), self.len())));
        }
        self.categorical.insert(name, values);
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], EstimationError> {
        self.numeric.get(name).map(Vec::as_slice).ok_or_else(|| EstimationError::MissingColumn(name.to_string()))
    }

    pub fn numeric_names(&self) -> impl Iterator<Item = &str> {
        self.numeric.keys().map(String::as_str)
    }

    pub fn categorical_names(&self) -> impl Iterator<Item = &str> {
        self.categorical.keys().map(String::as_str)
    }

    /// Labels of a categorical column; `firm` and `time` are always available.
    pub fn labels(&self, name: &str) -> Result<Vec<Option<&str>>, EstimationError> {
        if let Some(col) = self.categorical.get(name) {
            return Ok(col.iter().map(|v| v.as_deref()).collect());
        }
        match name {
            FIRM => Ok(self.firm.iter().map(|s| Some(s.as_str())).collect()),
            TIME => Ok(self.period.iter().map(|s| Some(s.as_str())).collect()),
            _ => Err(EstimationError::MissingColumn(name.to_string())),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick = |v: &Vec<String>| rows.iter().map(|&r| v[r].clone()).collect();
        Self {
            firm: pick(&self.firm),
            period: pick(&self.period),
            numeric: self.numeric.iter().map(|(k, v)| (k.clone(), rows.iter().map(|&r| v[r]).collect())).collect(),
            categorical: self
                .categorical
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&r| v[r].clone()).collect()))
                .collect(),
        }
    }

    /// Dense factor over `rows` for one term, crossing columns joined by `*`.
    pub fn factor(&self, columns: &[String], rows: &[usize]) -> Result<Factor, EstimationError> {
        let cols = columns.iter().map(|c| self.labels(c)).collect::<Result<Vec<_>, _>>()?;
        let keys: Vec<Vec<&str>> = rows
            .iter()
            .map(|&r| cols.iter().map(|c| c[r].unwrap_or("")).collect())
            .collect();
        Ok(Factor::from_labels(columns.join("*"), &keys))
    }
}

/// A set of fixed effects: each term is one factor, possibly an interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeSpec {
    pub terms: Vec<Vec<String>>,
}

impl FeSpec {
    pub fn none() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn time() -> Self {
        "time".parse().expect("static spec")
    }

    pub fn time_industry() -> Self {
        "time+industry".parse().expect("static spec")
    }

    pub fn time_x_industry() -> Self {
        "time*industry".parse().expect("static spec")
    }

    pub fn firm() -> Self {
        "firm".parse().expect("static spec")
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Every column named by any term.
    pub fn columns(&self) -> BTreeSet<&str> {
        self.terms.iter().flatten().map(String::as_str).collect()
    }
}

impl fmt::Display for FeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.terms.iter().map(|t| t.join("*")).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeSpec {
    type Err = EstimationError;

    /// Named specs (`none`, `time`, `time_industry`, `time_x_industry`,
    /// `firm`, `firm_time`) or an expression such as `time*industry+firm`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let expr = match s.trim() {
            "" | "none" => return Ok(Self::none()),
            "time_industry" => "time+industry",
            "time_x_industry" => "time*industry",
            "firm_time" => "firm+time",
            other => other,
        };
        let mut terms = Vec::new();
        for term in expr.split('+') {
            let cols: Vec<String> = term.split('*').map(|c| c.trim().to_string()).collect();
            if cols.iter().any(String::is_empty) {
                return Err(EstimationError::Invalid(format!("malformed fixed-effect spec {s:?}")));
            }
            terms.push(cols);
        }
        Ok(Self { terms })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub outcome: String,
    pub regressors: Vec<String>,
    pub controls: Vec<String>,
    pub fixed_effects: FeSpec,
    /// Categorical column to cluster on; `None` gives heteroskedasticity-robust errors.
    pub cluster: Option<String>,
    /// Tails for winsorizing the outcome, regressors and controls.
    pub winsor: Option<(f64, f64)>,
}

impl RegressionSpec {
    pub fn new(outcome: impl Into<String>, regressors: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            controls: Vec::new(),
            fixed_effects: FeSpec::none(),
            cluster: Some(FIRM.to_string()),
            winsor: Some((0.01, 0.99)),
        }
    }

    pub fn controls(mut self, controls: &[&str]) -> Self {
        self.controls = controls.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn fe(mut self, fe: FeSpec) -> Self {
        self.fixed_effects = fe;
        self
    }

    pub fn cluster(mut self, cluster: Option<&str>) -> Self {
        self.cluster = cluster.map(str::to_string);
        self
    }

    pub fn winsor(mut self, winsor: Option<(f64, f64)>) -> Self {
        self.winsor = winsor;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub outcome: String,
    /// Estimated terms in order; `const` leads when no fixed effects are absorbed.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub n: usize,
    pub r2: f64,
    pub adj_r2: f64,
    pub within_r2: Option<f64>,
    pub fixed_effects: String,
    pub dropped: Vec<String>,
    pub clusters: usize,
}

impl RegressionResult {
    fn position(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coef(&self, term: &str) -> Option<f64> {
        self.position(term).map(|i| self.coefficients[i])
    }

    pub fn se_of(&self, term: &str) -> Option<f64> {
        self.position(term).map(|i| self.se[i])
    }

    pub fn t_of(&self, term: &str) -> Option<f64> {
        self.position(term).map(|i| self.t[i])
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn rms(v: &[f64]) -> f64 {
    (sum_sq(v) / v.len().max(1) as f64).sqrt()
}

/// Demean columns by the factors, rescaling each to unit size first so the
/// absolute convergence tolerance means the same thing for every column.
pub(crate) fn absorb_scaled(columns: &[Vec<f64>], factors: &[Factor]) -> Result<Vec<Vec<f64>>, EstimationError> {
    if factors.is_empty() {
        return Ok(columns.to_vec());
    }
    let scales: Vec<f64> = columns.iter().map(|c| rms(c)).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    let scaled: Vec<Vec<f64>> = columns.iter().zip(&scales).map(|(c, s)| c.iter().map(|v| v / s).collect()).collect();
    let absorbed = absorb_fixed_effects(&scaled, factors, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(absorbed.columns.into_iter().zip(&scales).map(|(c, s)| c.into_iter().map(|v| v * s).collect()).collect())
}

/// Rows where every listed numeric column is finite and every listed
/// categorical column is present.
pub(crate) fn complete_rows(panel: &PanelDataset, numeric: &[&str], categorical: &[&str]) -> Result<Vec<usize>, EstimationError> {
    let nums = numeric.iter().map(|c| panel.numeric(c)).collect::<Result<Vec<_>, _>>()?;
    let cats = categorical.iter().map(|c| panel.labels(c)).collect::<Result<Vec<_>, _>>()?;
    Ok((0..panel.len())
        .filter(|&r| nums.iter().all(|c| c[r].is_finite()) && cats.iter().all(|c| c[r].is_some()))
        .collect())
}

/// Least squares of `outcome` on regressors and controls with absorbed
/// fixed effects and clustered standard errors.
pub fn panel_regression(panel: &PanelDataset, spec: &RegressionSpec) -> Result<RegressionResult, EstimationError> {
    let slopes: Vec<&str> = spec.regressors.iter().chain(&spec.controls).map(String::as_str).collect();
    let mut numeric = vec![spec.outcome.as_str()];
    numeric.extend(&slopes);
    let mut categorical: Vec<&str> = spec.fixed_effects.columns().into_iter().collect();
    if let Some(c) = &spec.cluster {
        categorical.push(c);
    }
    let rows = complete_rows(panel, &numeric, &categorical)?;
    if rows.is_empty() {
        return Err(EstimationError::NoUsableRows);
    }
    let n = rows.len();

    let mut columns: Vec<Vec<f64>> = numeric
        .iter()
        .map(|c| panel.numeric(c).map(|v| rows.iter().map(|&r| v[r]).collect()))
        .collect::<Result<_, _>>()?;
    if let Some((lo, hi)) = spec.winsor {
        for c in &mut columns {
            *c = winsorize(c, lo, hi);
        }
    }

    let factors = spec
        .fixed_effects
        .terms
        .iter()
        .map(|t| panel.factor(t, &rows))
        .collect::<Result<Vec<_>, _>>()?;
    let has_fe = !factors.is_empty();
    let dof_absorbed = super::fixed_effects::absorbed_dof(&factors);
    let demeaned = absorb_scaled(&columns, &factors)?;

    let y = &columns[0];
    let y_tilde = &demeaned[0];
    let mut names: Vec<String> = Vec::new();
    let mut design_cols: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    if !has_fe {
        names.push("const".to_string());
        design_cols.push(vec![1.0; n]);
    }
    for (j, name) in slopes.iter().enumerate() {
        let raw = &columns[j + 1];
        let tilde = &demeaned[j + 1];
        let raw_norm = sum_sq(raw).sqrt();
        if has_fe && (raw_norm == 0.0 || sum_sq(tilde).sqrt() <= ABSORBED_TOL * raw_norm) {
            dropped.push(name.to_string());
            continue;
        }
        names.push(name.to_string());
        design_cols.push(tilde.clone());
    }
    if design_cols.is_empty() {
        return Err(EstimationError::TooFewRows { rows: n, cols: 0 });
    }
    let x = DMatrix::from_fn(n, design_cols.len(), |i, j| design_cols[j][i]);
    let fit = ols(y_tilde, &x)?;
    for &j in &fit.dropped {
        dropped.push(names[j].clone());
    }
    let terms: Vec<String> = fit.kept.iter().map(|&j| names[j].clone()).collect();
    let x_kept = x.select_columns(&fit.kept);

    let k_total = fit.kept.len() + dof_absorbed;
    if n <= k_total {
        return Err(EstimationError::TooFewRows { rows: n, cols: k_total });
    }
    let cluster_codes = match &spec.cluster {
        Some(c) => panel.factor(std::slice::from_ref(c), &rows)?.codes,
        None => (0..n).collect(),
    };
    let vc = cluster_robust_se(&x_kept, &fit.residuals, &cluster_codes, dof_absorbed)?;

    let rss = fit.rss();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = 1.0 - rss / tss;
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k_total as f64);
    let within_r2 = has_fe.then(|| 1.0 - rss / sum_sq(y_tilde));
    let t = fit.coefficients.iter().zip(&vc.se).map(|(b, s)| b / s).collect();

    Ok(RegressionResult {
        outcome: spec.outcome.clone(),
        terms,
        coefficients: fit.coefficients,
        se: vc.se,
        t,
        n,
        r2,
        adj_r2,
        within_r2,
        fixed_effects: spec.fixed_effects.to_string(),
        dropped,
        clusters: vc.clusters,
    })
}
