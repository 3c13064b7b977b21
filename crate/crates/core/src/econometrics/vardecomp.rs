//! Attribution of a measure's variance to time, industry, their
//! interaction and the firm level, via incremental R².

use super::fixed_effects::Factor;
use super::panel::{absorb_scaled, complete_rows, PanelDataset, FIRM, TIME};
use super::EstimationError;

/// All shares in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    pub measure: String,
    pub n: usize,
    pub time: f64,
    pub industry: f64,
    pub time_x_industry: f64,
    pub firm_level: f64,
    /// R² of firm effects on the measure net of time×industry effects.
    pub firm_fe: f64,
    pub remaining: f64,
}

impl VarianceDecomposition {
    pub fn stage1_sum(&self) -> f64 {
        self.time + self.industry + self.time_x_industry + self.firm_level
    }

    pub fn stage2_sum(&self) -> f64 {
        self.firm_fe + self.remaining
    }
}

fn ss_about_mean(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum()
}

fn ss(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn r2_of(y: &[f64], tss: f64, factors: &[Factor]) -> Result<f64, EstimationError> {
    let resid = absorb_scaled(&[y.to_vec()], factors)?.remove(0);
    Ok((1.0 - ss(&resid) / tss).clamp(0.0, 1.0))
}

/// Decompose `measure` using the `time`, `industry_col` and `firm` factors.
pub fn variance_decomposition(
    panel: &PanelDataset,
    measure: &str,
    industry_col: &str,
) -> Result<VarianceDecomposition, EstimationError> {
    let rows = complete_rows(panel, &[measure], &[TIME, industry_col, FIRM])?;
    if rows.is_empty() {
        return Err(EstimationError::NoUsableRows);
    }
    let values = panel.numeric(measure)?;
    let y: Vec<f64> = rows.iter().map(|&r| values[r]).collect();
    let tss = ss_about_mean(&y);
    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if tss <= 1e-24 * (scale * scale).max(f64::MIN_POSITIVE) * y.len() as f64 || tss == 0.0 {
        return Err(EstimationError::Decomposition(format!("{measure} is constant over the sample")));
    }

    let time = panel.factor(&[TIME.to_string()], &rows)?;
    let industry = panel.factor(&[industry_col.to_string()], &rows)?;
    let cell = panel.factor(&[TIME.to_string(), industry_col.to_string()], &rows)?;
    let firm = panel.factor(&[FIRM.to_string()], &rows)?;

    let r_t = r2_of(&y, tss, std::slice::from_ref(&time))?;
    let r_ti = r2_of(&y, tss, &[time, industry])?.max(r_t);
    let r_txi = r2_of(&y, tss, std::slice::from_ref(&cell))?.max(r_ti);

    let time_share = 100.0 * r_t;
    let industry_share = 100.0 * (r_ti - r_t);
    let inter_share = 100.0 * (r_txi - r_ti);
    let firm_level = 100.0 - (time_share + industry_share + inter_share);

    let resid = absorb_scaled(&[y.clone()], std::slice::from_ref(&cell))?.remove(0);
    let rss = ss(&resid);
    let firm_fe = if rss <= 1e-20 * tss {
        0.0
    } else {
        100.0 * r2_of(&resid, rss, std::slice::from_ref(&firm))?
    };

    Ok(VarianceDecomposition {
        measure: measure.to_string(),
        n: y.len(),
        time: time_share,
        industry: industry_share,
        time_x_industry: inter_share,
        firm_level,
        firm_fe,
        remaining: 100.0 - firm_fe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(firms: usize, periods: usize, f: impl Fn(usize, usize) -> f64) -> PanelDataset {
        let mut fid = Vec::new();
        let mut per = Vec::new();
        let mut ind = Vec::new();
        let mut m = Vec::new();
        for i in 0..firms {
            for t in 0..periods {
                fid.push(format!("F{i}"));
                per.push(format!("T{t:02}"));
                ind.push(Some(format!("S{}", i % 5)));
                m.push(f(i, t));
            }
        }
        let mut p = PanelDataset::new(fid, per).unwrap();
        p.add_categorical("industry", ind).unwrap();
        p.add_numeric("m", m).unwrap();
        p
    }

    #[test]
    fn time_only_measure() {
        let d = variance_decomposition(&panel(30, 8, |_, t| (t as f64).powi(2)), "m", "industry").unwrap();
        assert!(d.time > 99.999, "{d:?}");
        assert!((d.stage1_sum() - 100.0).abs() < 1e-9);
        assert!((d.stage2_sum() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn idiosyncratic_measure_is_firm_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..200 * 8).map(|_| rng.random_range(0.0..1.0)).collect();
        let d = variance_decomposition(&panel(200, 8, |i, t| noise[i * 8 + t]), "m", "industry").unwrap();
        assert!(d.firm_level > 80.0, "{d:?}");
        assert!((d.stage1_sum() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn constant_measure_rejected() {
        let err = variance_decomposition(&panel(5, 4, |_, _| 0.3), "m", "industry").unwrap_err();
        assert!(matches!(err, EstimationError::Decomposition(_)));
    }

    #[test]
    fn row_order_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..1.0)).collect();
        let p = panel(20, 6, |i, t| v[i * 6 + t] + t as f64 * 0.1);
        let a = variance_decomposition(&p, "m", "industry").unwrap();
        let rev: Vec<usize> = (0..p.len()).rev().collect();
        let b = variance_decomposition(&p.subset(&rev), "m", "industry").unwrap();
        for (x, y) in [(a.time, b.time), (a.industry, b.industry), (a.time_x_industry, b.time_x_industry), (a.firm_fe, b.firm_fe)] {
            assert!((x - y).abs() < 1e-8);
        }
    }
}
