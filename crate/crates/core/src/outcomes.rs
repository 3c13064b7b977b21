//! Outcome variables: market-model volatility around calls, realized
//! volatility, the perpetual-inventory investment ratio and activity
//! indicators.

use std::collections::{BTreeMap, HashMap};
use std::io;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::econometrics::ols::ols;
use crate::quarter::{Month, Quarter};

pub const POST_WINDOW: (i64, i64) = (6, 28);
pub const POST_MIN_OBS: usize = 10;
pub const PRE_WINDOW: (i64, i64) = (-257, -6);
pub const PRE_MIN_OBS: usize = 60;
pub const REALIZED_HORIZON_DAYS: i64 = 90;
pub const DEPRECIATION: f64 = 0.10;

#[derive(Debug, thiserror::Error)]
pub enum OutcomeError {
    #[error("insufficient data: {what} has {have} observations, need {need}")]
    InsufficientData { what: String, have: usize, need: usize },
    #[error("degenerate series: {0}")]
    Degenerate(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// Daily simple returns on strictly increasing dates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DailySeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl DailySeries {
    pub fn new(mut points: Vec<(NaiveDate, f64)>) -> Result<Self, OutcomeError> {
        points.sort_by_key(|p| p.0);
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(OutcomeError::Validation(format!("duplicate date {}", w[0].0)));
        }
        let (dates, returns) = points.into_iter().unzip();
        Ok(Self { dates, returns })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Position of the first date on or after `date`.
    pub fn anchor(&self, date: NaiveDate) -> Option<usize> {
        let p = self.dates.partition_point(|d| *d < date);
        (p < self.dates.len()).then_some(p)
    }

    fn by_date(&self) -> HashMap<NaiveDate, f64> {
        self.dates.iter().copied().zip(self.returns.iter().copied()).collect()
    }
}

/// Firm and market returns over a window of trading-day positions
/// (inclusive) relative to the anchor on the market calendar.
fn window_pairs(firm: &DailySeries, market: &DailySeries, anchor: usize, window: (i64, i64)) -> (Vec<f64>, Vec<f64>) {
    let firm_ret = firm.by_date();
    let lo = (anchor as i64 + window.0).max(0);
    let hi = (anchor as i64 + window.1).min(market.len() as i64 - 1);
    let mut y = Vec::new();
    let mut x = Vec::new();
    for p in lo..=hi {
        let p = p as usize;
        if let Some(r) = firm_ret.get(&market.dates[p]).filter(|r| r.is_finite()) {
            if market.returns[p].is_finite() {
                y.push(*r);
                x.push(market.returns[p]);
            }
        }
    }
    (y, x)
}

/// Root mean squared residual of the market model over a window.
pub fn market_model_rmse(
    firm: &DailySeries,
    market: &DailySeries,
    call_date: NaiveDate,
    window: (i64, i64),
    min_obs: usize,
) -> Result<f64, OutcomeError> {
    let anchor = market.anchor(call_date).ok_or_else(|| OutcomeError::InsufficientData {
        what: format!("market calendar after {call_date}"),
        have: 0,
        need: min_obs,
    })?;
    let (y, x) = window_pairs(firm, market, anchor, window);
    if y.len() < min_obs.max(1) {
        return Err(OutcomeError::InsufficientData {
            what: format!("window {:+}..{:+}", window.0, window.1),
            have: y.len(),
            need: min_obs,
        });
    }
    let n = y.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let fit = ols(&y, &design).map_err(|e| OutcomeError::Degenerate(e.to_string()))?;
    Ok((fit.rss() / n as f64).sqrt())
}

/// Post-call RMSE over pre-call RMSE, minus one.
pub fn abnormal_volatility(firm: &DailySeries, market: &DailySeries, call_date: NaiveDate) -> Result<f64, OutcomeError> {
    let pre = market_model_rmse(firm, market, call_date, PRE_WINDOW, PRE_MIN_OBS)?;
    let post = market_model_rmse(firm, market, call_date, POST_WINDOW, POST_MIN_OBS)?;
    let scale = firm.returns.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if pre == 0.0 || pre <= 1e-14 * scale {
        return Err(OutcomeError::Degenerate(format!("pre-call RMSE is zero for call on {call_date}")));
    }
    Ok(post / pre - 1.0)
}

/// Sample standard deviation of returns dated in (quarter_end, quarter_end + horizon].
pub fn realized_volatility(firm: &DailySeries, quarter_end: NaiveDate, horizon_days: i64) -> Result<f64, OutcomeError> {
    let end = quarter_end + chrono::Duration::days(horizon_days);
    let r: Vec<f64> = firm
        .dates
        .iter()
        .zip(&firm.returns)
        .filter(|(d, r)| **d > quarter_end && **d <= end && r.is_finite())
        .map(|(_, r)| *r)
        .collect();
    if r.len() < 2 {
        return Err(OutcomeError::InsufficientData { what: format!("returns after {quarter_end}"), have: r.len(), need: 2 });
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
    Ok(var.sqrt())
}

/// Investment ratios capex_t / K_{t−1} with K_t = K_{t−1}(1−δ)(1+ρ_t) + capex_t.
///
/// `initial_ppe` is the stock entering the first quarter of `flows`, given
/// as (capex, ρ) pairs. A nonpositive lagged stock yields `None`.
pub fn investment_series(initial_ppe: f64, flows: &[(f64, f64)], delta: f64) -> Result<Vec<Option<f64>>, OutcomeError> {
    if !(initial_ppe > 0.0) {
        return Err(OutcomeError::Validation(format!("initial PPE must be positive, got {initial_ppe}")));
    }
    let mut k = initial_ppe;
    let mut out = Vec::with_capacity(flows.len());
    for &(capex, rho) in flows {
        out.push((k > 0.0 && capex.is_finite()).then(|| capex / k));
        let c = if capex.is_finite() { capex } else { 0.0 };
        k = k * (1.0 - delta) * (1.0 + rho) + c;
    }
    Ok(out)
}

/// Quarterly inflation by compounding the three monthly rates; quarters
/// with a missing month are left out.
pub fn quarterly_inflation(monthly: &[(Month, f64)]) -> BTreeMap<Quarter, f64> {
    let mut parts: BTreeMap<Quarter, Vec<f64>> = BTreeMap::new();
    for (m, r) in monthly {
        let q = Quarter { year: m.year, quarter: (m.month - 1) / 3 + 1 };
        parts.entry(q).or_default().push(*r);
    }
    parts
        .into_iter()
        .filter(|(_, v)| v.len() == 3)
        .map(|(q, v)| (q, v.iter().fold(1.0, |a, r| a * (1.0 + r)) - 1.0))
        .collect()
}

/// Compounded return per calendar month.
pub fn monthly_returns(series: &DailySeries) -> Vec<(Month, f64)> {
    let mut out: BTreeMap<Month, f64> = BTreeMap::new();
    for (d, r) in series.dates.iter().zip(&series.returns) {
        if r.is_finite() {
            let m = Month { year: chrono::Datelike::year(d), month: chrono::Datelike::month(d) as u8 };
            *out.entry(m).or_insert(1.0) *= 1.0 + r;
        }
    }
    out.into_iter().map(|(m, g)| (m, g - 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub firm_id: String,
    pub quarter: Quarter,
    pub lobby_amount: Option<f64>,
    pub green_patents: Option<f64>,
    pub ai_patents: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Indicators {
    pub lobby_any: u8,
    pub green_patent_any: u8,
    pub ai_patent_any: u8,
}

/// Indicators for each requested firm-quarter; unmatched ones are zero.
pub fn activity_indicators(rows: &[ActivityRow], keys: &[(String, Quarter)]) -> Result<Vec<Indicators>, OutcomeError> {
    let mut index: HashMap<(&str, Quarter), Indicators> = HashMap::new();
    for r in rows {
        let flag = |v: Option<f64>, name: &str| -> Result<u8, OutcomeError> {
            match v {
                Some(x) if x < 0.0 => Err(OutcomeError::Validation(format!("negative {name} for {} {}", r.firm_id, r.quarter))),
                Some(x) => Ok(u8::from(x > 0.0)),
                None => Ok(0),
            }
        };
        let ind = Indicators {
            lobby_any: flag(r.lobby_amount, "lobby_amount")?,
            green_patent_any: flag(r.green_patents, "green_patents")?,
            ai_patent_any: flag(r.ai_patents, "ai_patents")?,
        };
        index.insert((r.firm_id.as_str(), r.quarter), ind);
    }
    Ok(keys.iter().map(|(f, q)| index.get(&(f.as_str(), *q)).copied().unwrap_or_default()).collect())
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s.trim(), "%Y%m%d"))
        .ok()
}

#[derive(Deserialize)]
struct ReturnCsvRow {
    firm_id: String,
    date: String,
    ret: Option<f64>,
}

/// `firm_id,date,ret` into one series per firm.
pub fn read_returns_csv<R: io::Read>(r: R) -> Result<BTreeMap<String, DailySeries>, OutcomeError> {
    let mut points: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (i, rec) in csv::Reader::from_reader(r).deserialize::<ReturnCsvRow>().enumerate() {
        let row = rec?;
        let date = parse_date(&row.date).ok_or_else(|| OutcomeError::BadRow { row: i + 2, reason: format!("bad date {:?}", row.date) })?;
        points.entry(row.firm_id).or_default().push((date, row.ret.unwrap_or(f64::NAN)));
    }
    points
        .into_iter()
        .map(|(f, p)| DailySeries::new(p).map(|s| (f.clone(), s)).map_err(|e| OutcomeError::Validation(format!("firm {f}: {e}"))))
        .collect()
}

#[derive(Deserialize)]
struct MarketCsvRow {
    date: String,
    mkt_ret: Option<f64>,
}

/// `date,mkt_ret`.
pub fn read_market_csv<R: io::Read>(r: R) -> Result<DailySeries, OutcomeError> {
    let mut points = Vec::new();
    for (i, rec) in csv::Reader::from_reader(r).deserialize::<MarketCsvRow>().enumerate() {
        let row = rec?;
        let date = parse_date(&row.date).ok_or_else(|| OutcomeError::BadRow { row: i + 2, reason: format!("bad date {:?}", row.date) })?;
        points.push((date, row.mkt_ret.unwrap_or(f64::NAN)));
    }
    DailySeries::new(points)
}

/// One firm-quarter of the fundamentals file; every column after the key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalRow {
    pub firm_id: String,
    pub quarter: Quarter,
    pub capex: Option<f64>,
    #[serde(default)]
    pub ppe_initial: Option<f64>,
    #[serde(default)]
    pub iv_90d_atm: Option<f64>,
    #[serde(default)]
    pub industry: Option<String>,
    #[serde(default)]
    pub total_assets: Option<f64>,
}

pub fn read_fundamentals_csv<R: io::Read>(r: R) -> Result<Vec<FundamentalRow>, OutcomeError> {
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize::<FundamentalRow>() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_activity_csv<R: io::Read>(r: R) -> Result<Vec<ActivityRow>, OutcomeError> {
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize::<ActivityRow>() {
        out.push(rec?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct PpiCsvRow {
    month: String,
    ppi_change: f64,
}

/// `month,ppi_change` with changes as decimal rates.
pub fn read_ppi_csv<R: io::Read>(r: R) -> Result<Vec<(Month, f64)>, OutcomeError> {
    let mut out = Vec::new();
    for (i, rec) in csv::Reader::from_reader(r).deserialize::<PpiCsvRow>().enumerate() {
        let row = rec?;
        let m = row.month.parse::<Month>().map_err(|e| OutcomeError::BadRow { row: i + 2, reason: e.to_string() })?;
        out.push((m, row.ppi_change));
    }
    Ok(out)
}

/// A firm-quarter to compute outcomes for; call-anchored outcomes need the call date.
#[derive(Debug, Clone, PartialEq)]
pub struct CallKey {
    pub firm_id: String,
    pub quarter: Quarter,
    pub call_date: Option<NaiveDate>,
}

/// Outcome panel row keyed by firm and fiscal quarter; missing values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub firm_id: String,
    pub quarter: Quarter,
    pub implied_vol: Option<f64>,
    pub abnormal_vol: Option<f64>,
    pub realized_vol: Option<f64>,
    pub investment: Option<f64>,
    pub lobby_any: u8,
    pub green_patent_any: u8,
    pub ai_patent_any: u8,
}

/// Counts of outcomes that could not be computed, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OutcomeDiagnostics {
    pub skipped: BTreeMap<String, usize>,
}

impl OutcomeDiagnostics {
    fn note(&mut self, what: &str, err: &OutcomeError) {
        let kind = match err {
            OutcomeError::InsufficientData { .. } => "insufficient_data",
            OutcomeError::Degenerate(_) => "degenerate",
            _ => "other",
        };
        *self.skipped.entry(format!("{what}:{kind}")).or_default() += 1;
    }
}

pub struct OutcomeInputs<'a> {
    pub returns: &'a BTreeMap<String, DailySeries>,
    pub market: &'a DailySeries,
    pub fundamentals: &'a [FundamentalRow],
    pub activity: &'a [ActivityRow],
    pub inflation: &'a BTreeMap<Quarter, f64>,
}

/// Assemble outcome rows for every call.
pub fn build_outcomes(calls: &[CallKey], inputs: &OutcomeInputs<'_>) -> Result<(Vec<OutcomeRecord>, OutcomeDiagnostics), OutcomeError> {
    let mut diag = OutcomeDiagnostics::default();
    let fund: HashMap<(&str, Quarter), &FundamentalRow> =
        inputs.fundamentals.iter().map(|f| ((f.firm_id.as_str(), f.quarter), f)).collect();

    // Investment ratios per firm over its contiguous fundamentals history.
    let mut by_firm: BTreeMap<&str, Vec<&FundamentalRow>> = BTreeMap::new();
    for f in inputs.fundamentals {
        by_firm.entry(f.firm_id.as_str()).or_default().push(f);
    }
    let mut investment: HashMap<(&str, Quarter), f64> = HashMap::new();
    for (firm, mut rows) in by_firm {
        rows.sort_by_key(|r| r.quarter);
        let Some(start) = rows.iter().position(|r| r.ppe_initial.is_some()) else { continue };
        let ppe = rows[start].ppe_initial.unwrap_or(f64::NAN);
        let flows: Vec<(f64, f64)> = rows[start..]
            .iter()
            .map(|r| (r.capex.unwrap_or(f64::NAN), inputs.inflation.get(&r.quarter).copied().unwrap_or(0.0)))
            .collect();
        match investment_series(ppe, &flows, DEPRECIATION) {
            Ok(ratios) => {
                for (r, v) in rows[start..].iter().zip(ratios) {
                    if let Some(v) = v {
                        investment.insert((firm, r.quarter), v);
                    }
                }
            }
            Err(e) => diag.note("investment", &e),
        }
    }

    let keys: Vec<(String, Quarter)> = calls.iter().map(|c| (c.firm_id.clone(), c.quarter)).collect();
    let indicators = activity_indicators(inputs.activity, &keys)?;
    let empty = DailySeries::default();
    let mut out = Vec::with_capacity(calls.len());
    for (call, ind) in calls.iter().zip(indicators) {
        let series = inputs.returns.get(&call.firm_id).unwrap_or(&empty);
        let abnormal_vol = match call.call_date.map(|d| abnormal_volatility(series, inputs.market, d)) {
            Some(Ok(v)) => Some(v),
            Some(Err(e)) => {
                diag.note("abnormal_vol", &e);
                None
            }
            None => None,
        };
        let realized_vol = match realized_volatility(series, call.quarter.end_date(), REALIZED_HORIZON_DAYS) {
            Ok(v) => Some(v),
            Err(e) => {
                diag.note("realized_vol", &e);
                None
            }
        };
        let key = (call.firm_id.as_str(), call.quarter);
        out.push(OutcomeRecord {
            firm_id: call.firm_id.clone(),
            quarter: call.quarter,
            implied_vol: fund.get(&key).and_then(|f| f.iv_90d_atm),
            abnormal_vol,
            realized_vol,
            investment: investment.get(&key).copied(),
            lobby_any: ind.lobby_any,
            green_patent_any: ind.green_patent_any,
            ai_patent_any: ind.ai_patent_any,
        });
    }
    Ok((out, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(k: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(k)
    }

    /// Market alternates in pairs (a,a,b,b,...) so a (+c,−c) residual
    /// pattern is orthogonal to both the intercept and the market.
    fn fixture(n: usize, beta: f64, c_pre: f64, c_post: f64, call: usize) -> (DailySeries, DailySeries) {
        let mkt: Vec<f64> = (0..n).map(|i| 0.001 * ((i / 2) % 7) as f64 - 0.003).collect();
        let firm: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let c = if i < call { c_pre } else { c_post };
                0.0005 + beta * mkt[i] + sign * c
            })
            .collect();
        let m = DailySeries::new((0..n).map(|i| (day(i as i64), mkt[i])).collect()).unwrap();
        let f = DailySeries::new((0..n).map(|i| (day(i as i64), firm[i])).collect()).unwrap();
        (f, m)
    }

    #[test]
    fn perfect_fit_zero_rmse() {
        let (f, m) = fixture(400, 1.2, 0.0, 0.0, 300);
        assert!(market_model_rmse(&f, &m, day(300), PRE_WINDOW, 60).unwrap() < 1e-15);
    }

    #[test]
    fn alternating_residuals_give_c() {
        // pre window −257..−6 has 252 positions, an even count starting on an even index
        let (f, m) = fixture(400, 0.8, 0.02, 0.02, 301);
        let rmse = market_model_rmse(&f, &m, day(301), (-257, -6), 60).unwrap();
        // 252 points starting at 44 (even): pairs complete, 36 full cycles of 7 pairs
        assert!((rmse - 0.02).abs() < 1e-12, "{rmse}");
    }

    /// Residuals orthogonal to [1, x] with the requested RMSE.
    fn orthogonal(x: &[f64], rmse: f64, phase: f64) -> Vec<f64> {
        let n = x.len() as f64;
        let mut u: Vec<f64> = (0..x.len()).map(|i| (i as f64 * 1.7 + phase).sin()).collect();
        let mx = x.iter().sum::<f64>() / n;
        let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
        let mu = u.iter().sum::<f64>() / n;
        u.iter_mut().for_each(|v| *v -= mu);
        let b = u.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>() / xc.iter().map(|v| v * v).sum::<f64>();
        u.iter_mut().zip(&xc).for_each(|(v, c)| *v -= b * c);
        let r = (u.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        u.iter().map(|v| v * rmse / r).collect()
    }

    fn event(pre_scale: f64, post_scale: f64) -> (DailySeries, DailySeries) {
        let n = 400;
        let mkt: Vec<f64> = (0..n).map(|i| ((i * 37) % 23) as f64 * 0.001 - 0.011).collect();
        let mut firm: Vec<f64> = mkt.iter().map(|v| 0.0003 + 1.1 * v).collect();
        for ((lo, hi), c, phase) in [((43usize, 294usize), pre_scale, 0.3), ((306, 328), post_scale, 2.9)] {
            let e = orthogonal(&mkt[lo..=hi], c, phase);
            for (k, i) in (lo..=hi).enumerate() {
                firm[i] += e[k];
            }
        }
        let m = DailySeries::new((0..n).map(|i| (day(i as i64), mkt[i])).collect()).unwrap();
        let f = DailySeries::new((0..n).map(|i| (day(i as i64), firm[i])).collect()).unwrap();
        (f, m)
    }

    #[test]
    fn abnormal_vol_equal_and_doubled() {
        let (f, m) = event(0.02, 0.02);
        let v = abnormal_volatility(&f, &m, day(300)).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
        let (f, m) = event(0.02, 0.04);
        let v = abnormal_volatility(&f, &m, day(300)).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn window_minimum_enforced() {
        let (f, m) = fixture(400, 0.8, 0.02, 0.02, 300);
        let err = market_model_rmse(&f, &m, day(300), (0, 8), 10).unwrap_err();
        assert!(matches!(err, OutcomeError::InsufficientData { have: 9, need: 10, .. }));
        // post window is 23 positions when data is dense
        let (y, _) = window_pairs(&f, &m, 300, POST_WINDOW);
        assert_eq!(y.len(), 23);
        // too little history before the call
        assert!(matches!(abnormal_volatility(&f, &m, day(50)), Err(OutcomeError::InsufficientData { .. })));
    }

    #[test]
    fn constant_pre_series_is_degenerate() {
        let n = 400;
        let m = DailySeries::new((0..n).map(|i| (day(i), if i < 300 { 0.001 } else { (i % 3) as f64 * 0.01 })).collect()).unwrap();
        let f = DailySeries::new((0..n).map(|i| (day(i), if i < 300 { 0.002 } else { (i % 5) as f64 * 0.01 })).collect()).unwrap();
        assert!(matches!(abnormal_volatility(&f, &m, day(300)), Err(OutcomeError::Degenerate(_))));
    }

    #[test]
    fn anchor_moves_to_next_trading_day() {
        let m = DailySeries::new(vec![(day(0), 0.0), (day(3), 0.0)]).unwrap();
        assert_eq!(m.anchor(day(1)), Some(1));
        assert_eq!(m.anchor(day(4)), None);
    }

    #[test]
    fn realized_vol_cases() {
        let qe = day(0);
        let alt = DailySeries::new((1..=60).map(|k| (day(k), if k % 2 == 0 { 0.01 } else { -0.01 })).collect()).unwrap();
        // mean 0, Σ(r²) = 60·1e-4, sd = sqrt(60e-4/59)
        let oracle = (60.0 * 1e-4 / 59.0f64).sqrt();
        assert!((realized_volatility(&alt, qe, 90).unwrap() - oracle).abs() < 1e-15);
        let flat = DailySeries::new((1..=30).map(|k| (day(k), 0.004)).collect()).unwrap();
        assert!(realized_volatility(&flat, qe, 90).unwrap().abs() < 1e-15);
        assert!(realized_volatility(&flat, day(200), 90).is_err());
        // the quarter-end day itself and day 91 are outside
        let edge = DailySeries::new(vec![(day(0), 5.0), (day(1), 0.01), (day(90), 0.03), (day(91), 9.0)]).unwrap();
        assert!((realized_volatility(&edge, qe, 90).unwrap() - (0.0002f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn investment_examples() {
        assert_eq!(investment_series(100.0, &[(10.0, 0.0)], 0.10).unwrap(), vec![Some(0.10)]);
        let r = investment_series(100.0, &[(0.0, 0.02), (5.0, 0.0)], 0.10).unwrap();
        assert_eq!(r[0], Some(0.0));
        assert!((r[1].unwrap() - 5.0 / 91.8).abs() < 1e-15);
        assert_eq!(investment_series(100.0, &[(10.0, 0.0); 3], 0.10).unwrap(), vec![Some(0.10); 3]);
        assert!(investment_series(0.0, &[(1.0, 0.0)], 0.10).is_err());
        // stock wiped out by deflation, then recovers through capex
        let r = investment_series(1.0, &[(0.0, -1.0), (2.0, 0.0), (1.0, 0.0)], 0.10).unwrap();
        assert_eq!(r[1], None);
        assert_eq!(r[2], Some(0.5));
    }

    proptest::proptest! {
        #[test]
        fn fixed_point_constant(k in 1.0f64..1e6, horizon in 1usize..80) {
            let flows = vec![(0.1 * k, 0.0); horizon];
            for r in investment_series(k, &flows, 0.10).unwrap() {
                proptest::prop_assert!((r.unwrap() - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inflation_compounds_full_quarters() {
        let m = |s: &str| s.parse::<Month>().unwrap();
        let q = quarterly_inflation(&[(m("2021-01"), 0.01), (m("2021-02"), 0.01), (m("2021-03"), 0.01), (m("2021-04"), 0.02)]);
        assert_eq!(q.len(), 1);
        assert!((q[&"2021Q1".parse().unwrap()] - (1.01f64.powi(3) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn indicators_impute_zero_and_reject_negative() {
        let q: Quarter = "2021Q1".parse().unwrap();
        let rows = vec![ActivityRow { firm_id: "A".into(), quarter: q, lobby_amount: Some(0.0), green_patents: Some(3.0), ai_patents: None }];
        let out = activity_indicators(&rows, &[("A".into(), q), ("B".into(), q)]).unwrap();
        assert_eq!(out[0], Indicators { lobby_any: 0, green_patent_any: 1, ai_patent_any: 0 });
        assert_eq!(out[1], Indicators::default());
        let bad = vec![ActivityRow { lobby_amount: Some(-1.0), ..rows[0].clone() }];
        assert!(matches!(activity_indicators(&bad, &[]), Err(OutcomeError::Validation(_))));
    }

    #[test]
    fn csv_readers() {
        let r = read_returns_csv("firm_id,date,ret\nA,2021-01-05,0.01\nA,2021-01-04,\nB,20210104,0.02\n".as_bytes()).unwrap();
        assert_eq!(r["A"].dates[0], NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
        assert!(r["A"].returns[0].is_nan());
        assert!(read_returns_csv("firm_id,date,ret\nA,2021-01-05,0.01\nA,2021-01-05,0.02\n".as_bytes()).is_err());
        let f = read_fundamentals_csv("firm_id,quarter,capex,ppe_initial,iv_90d_atm\nA,2020Q3,1.5,,0.3\n".as_bytes()).unwrap();
        assert_eq!(f[0].ppe_initial, None);
        assert_eq!(f[0].iv_90d_atm, Some(0.3));
        assert_eq!(f[0].industry, None);
        let m = monthly_returns(&DailySeries::new(vec![(day(0), 0.1), (day(1), 0.1), (day(40), -0.5)]).unwrap());
        assert!((m[0].1 - 0.21).abs() < 1e-15);
        assert_eq!(m[1].1, -0.5);
    }
}
