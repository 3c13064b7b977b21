//! Monthly cross-sectional regressions averaged over time.

use nalgebra::DMatrix;

use super::newey_west::nw_mean_se;
use super::ols::ols;
use super::quantile::Bounds;
use super::EstimationError;

/// A firm-year exposure after averaging its quarters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnualExposure {
    Value(f64),
    /// Mean is exactly zero; such firm-years are left out of sorts and logs.
    Excluded,
    /// No quarterly value was available.
    Missing,
}

impl AnnualExposure {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// Mean of the available (finite) quarterly values.
pub fn annualize_exposure(quarterly: &[f64]) -> AnnualExposure {
    let vals: Vec<f64> = quarterly.iter().copied().filter(|v| v.is_finite()).collect();
    if vals.is_empty() {
        return AnnualExposure::Missing;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    if mean == 0.0 {
        AnnualExposure::Excluded
    } else {
        AnnualExposure::Value(mean)
    }
}

/// One period's cross-section: outcome and regressor columns (no intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub period: String,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl CrossSection {
    /// Rows with every value finite.
    fn complete(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let keep: Vec<usize> = (0..self.y.len())
            .filter(|&i| self.y[i].is_finite() && self.x.iter().all(|c| c[i].is_finite()))
            .collect();
        (
            keep.iter().map(|&i| self.y[i]).collect(),
            self.x.iter().map(|c| keep.iter().map(|&i| c[i]).collect()).collect(),
        )
    }
}

/// Set regressor values outside pooled quantile bounds to missing.
pub fn trim_regressors(sections: &mut [CrossSection], p_low: f64, p_high: f64) {
    let k = sections.first().map_or(0, |s| s.x.len());
    for j in 0..k {
        let pooled: Vec<f64> = sections.iter().flat_map(|s| s.x[j].iter().copied()).collect();
        if let Some(b) = Bounds::from_quantiles(&pooled, p_low, p_high) {
            for s in sections.iter_mut() {
                s.x[j] = b.cut(&s.x[j]);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FmbResult {
    /// `const` followed by the regressor names.
    pub terms: Vec<String>,
    pub periods: Vec<String>,
    /// Coefficients per used period, aligned with `terms`.
    pub series: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub avg_adj_r2: f64,
    pub avg_n: f64,
    /// Periods left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

pub fn fama_macbeth(sections: &[CrossSection], names: &[&str], nw_lag: usize) -> Result<FmbResult, EstimationError> {
    let k = names.len() + 1;
    let mut periods = Vec::new();
    let mut series = Vec::new();
    let mut adj = Vec::new();
    let mut sizes = Vec::new();
    let mut skipped = Vec::new();
    for s in sections {
        if s.x.len() != names.len() {
            return Err(EstimationError::Invalid(format!("period {} has {} regressors, expected {}", s.period, s.x.len(), names.len())));
        }
        let (y, x) = s.complete();
        let n = y.len();
        if n < k + 2 {
            skipped.push((s.period.clone(), format!("{n} observations")));
            continue;
        }
        let design = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { x[j - 1][i] });
        let fit = match ols(&y, &design) {
            Ok(f) if f.dropped.is_empty() => f,
            Ok(_) => {
                skipped.push((s.period.clone(), "rank deficient".to_string()));
                continue;
            }
            Err(e) => {
                skipped.push((s.period.clone(), e.to_string()));
                continue;
            }
        };
        let mean = y.iter().sum::<f64>() / n as f64;
        let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let r2 = 1.0 - fit.rss() / tss;
        adj.push(1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k as f64));
        sizes.push(n as f64);
        periods.push(s.period.clone());
        series.push(fit.coefficients);
    }
    if series.is_empty() {
        return Err(EstimationError::InsufficientData("no period could be estimated".into()));
    }
    let t_len = series.len() as f64;
    let mut mean = Vec::with_capacity(k);
    let mut se = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = series.iter().map(|b| b[j]).collect();
        mean.push(col.iter().sum::<f64>() / t_len);
        se.push(if col.len() > 1 { nw_mean_se(&col, nw_lag) } else { f64::NAN });
    }
    let t = mean.iter().zip(&se).map(|(m, s)| m / s).collect();
    let mut terms = vec!["const".to_string()];
    terms.extend(names.iter().map(|s| s.to_string()));
    Ok(FmbResult {
        terms,
        periods,
        series,
        mean,
        se,
        t,
        avg_adj_r2: adj.iter().sum::<f64>() / t_len,
        avg_n: sizes.iter().sum::<f64>() / t_len,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn annualizing() {
        assert_eq!(annualize_exposure(&[0.01, 0.02, 0.03, 0.04]), AnnualExposure::Value(0.025));
        assert_eq!(annualize_exposure(&[0.0; 4]), AnnualExposure::Excluded);
        match annualize_exposure(&[0.02, f64::NAN, 0.04]) {
            AnnualExposure::Value(v) => assert!((v - 0.03).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(annualize_exposure(&[]), AnnualExposure::Missing);
    }

    fn section(period: &str, rng: &mut ChaCha8Rng, n: usize, lambda: f64) -> CrossSection {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = x.iter().map(|v| lambda * v + rng.sample::<f64, _>(StandardNormal)).collect();
        CrossSection { period: period.into(), y, x: vec![x] }
    }

    #[test]
    fn identical_months_zero_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = section("m", &mut rng, 40, 0.5);
        let sections: Vec<CrossSection> = (0..6).map(|i| CrossSection { period: format!("m{i}"), ..s.clone() }).collect();
        let res = fama_macbeth(&sections, &["x"], 3).unwrap();
        let single = fama_macbeth(&sections[..1], &["x"], 3).unwrap();
        assert!((res.mean[1] - single.mean[1]).abs() < 1e-12);
        assert!(res.se[1].abs() < 1e-12);
    }

    #[test]
    fn mean_is_average_of_monthly_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sections: Vec<CrossSection> = (0..10).map(|i| section(&format!("m{i}"), &mut rng, 30, 0.3)).collect();
        let res = fama_macbeth(&sections, &["x"], 3).unwrap();
        let avg: f64 = sections
            .iter()
            .map(|s| {
                let x = crate::econometrics::ols::design(&[&s.x[0]], true);
                ols(&s.y, &x).unwrap().coefficients[1]
            })
            .sum::<f64>()
            / 10.0;
        assert_eq!(res.mean[1], avg);
        assert_eq!(res.series.len(), 10);
    }

    #[test]
    fn thin_and_degenerate_months_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut sections = vec![section("a", &mut rng, 30, 0.1), section("b", &mut rng, 3, 0.1)];
        sections.push(CrossSection { period: "c".into(), y: vec![1.0; 10], x: vec![vec![2.0; 10]] });
        sections.push(section("d", &mut rng, 30, 0.1));
        let res = fama_macbeth(&sections, &["x"], 3).unwrap();
        assert_eq!(res.periods, vec!["a".to_string(), "d".to_string()]);
        assert_eq!(res.skipped.len(), 2);
    }

    #[test]
    fn pooled_trim_cuts_tails() {
        let mut s = vec![CrossSection { period: "a".into(), y: vec![0.0; 100], x: vec![(1..=100).map(f64::from).collect()] }];
        trim_regressors(&mut s, 0.01, 0.99);
        assert_eq!(s[0].x[0].iter().filter(|v| v.is_nan()).count(), 2);
    }
}
