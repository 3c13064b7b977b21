//! Empirical quantiles (linear interpolation between order statistics,
//! "type 7") and the winsorizing / trimming built on them. `NaN` marks a
//! missing value throughout.

/// Quantile of already sorted, non-missing data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn sorted_present(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile ignoring missing values.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    quantile_sorted(&sorted_present(values), p)
}

/// Lower and upper cutoffs computed from a column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    /// `None` when the column has no non-missing value.
    pub fn from_quantiles(values: &[f64], p_low: f64, p_high: f64) -> Option<Self> {
        let sorted = sorted_present(values);
        Some(Self { low: quantile_sorted(&sorted, p_low)?, high: quantile_sorted(&sorted, p_high)? })
    }

    pub fn clamp(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&x| if x.is_nan() { x } else { x.clamp(self.low, self.high) }).collect()
    }

    pub fn cut(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&x| if x < self.low || x > self.high { f64::NAN } else { x }).collect()
    }
}

/// Clamp values outside the `p_low`/`p_high` quantiles to those quantiles.
/// Also returns the cutoffs used.
pub fn winsorize_with_bounds(values: &[f64], p_low: f64, p_high: f64) -> (Vec<f64>, Option<Bounds>) {
    match Bounds::from_quantiles(values, p_low, p_high) {
        Some(b) => (b.clamp(values), Some(b)),
        None => (values.to_vec(), None),
    }
}

pub fn winsorize(values: &[f64], p_low: f64, p_high: f64) -> Vec<f64> {
    winsorize_with_bounds(values, p_low, p_high).0
}

/// Set values outside the `p_low`/`p_high` quantiles to missing.
pub fn trim_with_bounds(values: &[f64], p_low: f64, p_high: f64) -> (Vec<f64>, Option<Bounds>) {
    match Bounds::from_quantiles(values, p_low, p_high) {
        Some(b) => (b.cut(values), Some(b)),
        None => (values.to_vec(), None),
    }
}

pub fn trim(values: &[f64], p_low: f64, p_high: f64) -> Vec<f64> {
    trim_with_bounds(values, p_low, p_high).0
}
