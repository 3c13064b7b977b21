//! Exposure-sorted quintile portfolios and their five-factor alphas.
//!
//! Exposures measured over calendar year Y are sorted on March 31 of Y+1
//! and the portfolios are held from April Y+1 for up to twelve months.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use nalgebra::DMatrix;
use serde::Deserialize;

use super::newey_west::nw_ols_vcov;
use super::ols::ols;
use super::EstimationError;
use crate::quarter::Month;

/// Assign quintiles 1..=5 by rank, ties broken by firm id.
///
/// The firm at rank r (0-based) of n lands in quintile ⌊5r/n⌋+1, so sizes
/// never differ by more than one.
pub fn quintile_assign(exposures: &[(String, f64)]) -> Result<Vec<(String, u8)>, EstimationError> {
    let mut sorted: Vec<&(String, f64)> = exposures.iter().filter(|(_, v)| v.is_finite()).collect();
    let n = sorted.len();
    if n < 5 {
        return Err(EstimationError::Formation(format!("{n} eligible firms, need at least 5")));
    }
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(r, (f, _))| (f.clone(), (5 * r / n) as u8 + 1))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioMonth {
    pub month: Month,
    /// Equal-weighted return of quintiles 1..=5, `None` if no member traded.
    pub quintiles: [Option<f64>; 5],
}

impl PortfolioMonth {
    /// Quintile 5 minus quintile 1.
    pub fn high_minus_low(&self) -> Option<f64> {
        Some(self.quintiles[4]? - self.quintiles[0]?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioResult {
    /// (exposure year, firm, quintile).
    pub assignments: Vec<(i32, String, u8)>,
    pub months: Vec<PortfolioMonth>,
    /// Exposure years that could not be sorted.
    pub formation_errors: Vec<(i32, String)>,
}

impl PortfolioResult {
    pub fn series(&self, quintile: usize) -> Vec<(Month, f64)> {
        self.months.iter().filter_map(|m| Some((m.month, m.quintiles[quintile - 1]?))).collect()
    }

    pub fn hml_series(&self) -> Vec<(Month, f64)> {
        self.months.iter().filter_map(|m| Some((m.month, m.high_minus_low()?))).collect()
    }
}

/// Sort firms by annual exposure and track equal-weighted monthly returns.
///
/// `annual` holds (firm, exposure year, exposure) with exclusions already
/// applied; `returns` holds (firm, month, return).
pub fn quintile_portfolios(
    annual: &[(String, i32, f64)],
    returns: &[(String, Month, f64)],
    hold: usize,
) -> Result<PortfolioResult, EstimationError> {
    if hold == 0 || hold > 12 {
        return Err(EstimationError::Invalid(format!("holding period {hold} must be 1..=12 months")));
    }
    let ret: HashMap<(&str, Month), f64> = returns
        .iter()
        .filter(|r| r.2.is_finite())
        .map(|(f, m, r)| ((f.as_str(), *m), *r))
        .collect();
    let mut by_year: BTreeMap<i32, Vec<(String, f64)>> = BTreeMap::new();
    for (f, y, v) in annual {
        by_year.entry(*y).or_default().push((f.clone(), *v));
    }

    let mut assignments = Vec::new();
    let mut months = Vec::new();
    let mut formation_errors = Vec::new();
    for (year, firms) in by_year {
        let groups = match quintile_assign(&firms) {
            Ok(g) => g,
            Err(e) => {
                formation_errors.push((year, e.to_string()));
                continue;
            }
        };
        let start = Month { year: year + 1, month: 4 };
        for k in 0..hold {
            let month = start.add(k as i32);
            let mut sums = [0.0; 5];
            let mut counts = [0usize; 5];
            for (f, q) in &groups {
                if let Some(r) = ret.get(&(f.as_str(), month)) {
                    sums[*q as usize - 1] += r;
                    counts[*q as usize - 1] += 1;
                }
            }
            if counts.iter().all(|c| *c == 0) {
                continue;
            }
            let quintiles = std::array::from_fn(|q| (counts[q] > 0).then(|| sums[q] / counts[q] as f64));
            months.push(PortfolioMonth { month, quintiles });
        }
        assignments.extend(groups.into_iter().map(|(f, q)| (year, f, q)));
    }
    months.sort_by_key(|m| m.month);
    Ok(PortfolioResult { assignments, months, formation_errors })
}

/// Monthly factor returns in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorRow {
    pub month: Month,
    pub mkt_rf: f64,
    pub smb: f64,
    pub hml: f64,
    pub rmw: f64,
    pub cma: f64,
    pub rf: f64,
}

impl FactorRow {
    fn loadings(&self) -> [f64; 5] {
        [self.mkt_rf, self.smb, self.hml, self.rmw, self.cma]
    }
}

pub const FACTOR_NAMES: [&str; 5] = ["MKT_RF", "SMB", "HML", "RMW", "CMA"];

#[derive(Deserialize)]
struct FactorCsvRow {
    date: String,
    #[serde(rename = "MKT_RF")]
    mkt_rf: f64,
    #[serde(rename = "SMB")]
    smb: f64,
    #[serde(rename = "HML")]
    hml: f64,
    #[serde(rename = "RMW")]
    rmw: f64,
    #[serde(rename = "CMA")]
    cma: f64,
    #[serde(rename = "RF")]
    rf: f64,
}

/// Read a `date,MKT_RF,SMB,HML,RMW,CMA,RF` file.
pub fn read_factors_csv<R: Read>(reader: R) -> Result<Vec<FactorRow>, EstimationError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<FactorCsvRow>().enumerate() {
        let r = rec.map_err(|e| EstimationError::Invalid(format!("factor row {}: {e}", i + 2)))?;
        let month = r.date.parse::<Month>().map_err(|e| EstimationError::Invalid(format!("factor row {}: {e}", i + 2)))?;
        rows.push(FactorRow { month, mkt_rf: r.mkt_rf, smb: r.smb, hml: r.hml, rmw: r.rmw, cma: r.cma, rf: r.rf });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    /// Monthly alpha in percent.
    pub alpha: f64,
    pub se: f64,
    pub t: f64,
    /// Twelve times the monthly alpha.
    pub annualized: f64,
    /// Loadings on MKT_RF, SMB, HML, RMW, CMA.
    pub loadings: [f64; 5],
    pub months: usize,
    pub r2: f64,
}

pub const MIN_ALPHA_MONTHS: usize = 24;

/// Regress a monthly return series (percent) on the five factors.
///
/// With `excess` the risk-free rate is subtracted first; pass `false` for
/// zero-investment series such as high-minus-low.
pub fn five_factor_alpha(
    returns: &[(Month, f64)],
    factors: &[FactorRow],
    excess: bool,
    nw_lag: usize,
) -> Result<AlphaResult, EstimationError> {
    let by_month: HashMap<Month, &FactorRow> = factors.iter().map(|f| (f.month, f)).collect();
    let mut rows: Vec<(f64, &FactorRow)> = returns
        .iter()
        .filter_map(|(m, r)| {
            let f = by_month.get(m)?;
            r.is_finite().then(|| (if excess { r - f.rf } else { *r }, *f))
        })
        .collect();
    rows.sort_by_key(|(_, f)| f.month);
    let t = rows.len();
    if t < MIN_ALPHA_MONTHS {
        return Err(EstimationError::InsufficientData(format!("{t} overlapping months, need {MIN_ALPHA_MONTHS}")));
    }
    let y: Vec<f64> = rows.iter().map(|(r, _)| *r).collect();
    let x = DMatrix::from_fn(t, 6, |i, j| if j == 0 { 1.0 } else { rows[i].1.loadings()[j - 1] });
    let fit = ols(&y, &x)?;
    if !fit.dropped.is_empty() {
        return Err(EstimationError::Inference("factor matrix is rank deficient".into()));
    }
    let vcov = nw_ols_vcov(&x, &fit.residuals, &fit.xtx_inv, nw_lag);
    let alpha = fit.coefficients[0];
    let se = vcov[(0, 0)].max(0.0).sqrt();
    let mean = y.iter().sum::<f64>() / t as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(AlphaResult {
        alpha,
        se,
        t: alpha / se,
        annualized: 12.0 * alpha,
        loadings: std::array::from_fn(|j| fit.coefficients[j + 1]),
        months: t,
        r2: 1.0 - fit.rss() / tss,
    })
}
