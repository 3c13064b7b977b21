//! Newey-West (Bartlett kernel) long-run variances.
//!
//! Both estimators carry the T/(T−k) small-sample factor, so at lag 0 the
//! standard error of a mean is the familiar sample sd/√T.

use nalgebra::DMatrix;

/// w_j = 1 − j/(L+1) for 0 ≤ j ≤ L, zero beyond.
pub fn bartlett_weight(j: usize, lag: usize) -> f64 {
    if j > lag {
        0.0
    } else {
        1.0 - j as f64 / (lag as f64 + 1.0)
    }
}

/// HAC standard error of the sample mean of `series`.
pub fn nw_mean_se(series: &[f64], lag: usize) -> f64 {
    let t = series.len();
    if t < 2 {
        return f64::NAN;
    }
    let tf = t as f64;
    let mean = series.iter().sum::<f64>() / tf;
    let dev: Vec<f64> = series.iter().map(|b| b - mean).collect();
    let mut s = 0.0;
    for j in 0..=lag.min(t - 1) {
        let gamma: f64 = (j..t).map(|i| dev[i] * dev[i - j]).sum::<f64>() / tf;
        s += if j == 0 { gamma } else { 2.0 * bartlett_weight(j, lag) * gamma };
    }
    (s.max(0.0) / tf * tf / (tf - 1.0)).sqrt()
}

/// HAC covariance of time-series OLS coefficients given regressors `x`
/// (T×k, intercept included by the caller) and residuals.
pub fn nw_ols_vcov(x: &DMatrix<f64>, residuals: &[f64], xtx_inv: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (t, k) = x.shape();
    let scores: Vec<nalgebra::DVector<f64>> = (0..t).map(|i| x.row(i).transpose() * residuals[i]).collect();
    let mut s = DMatrix::<f64>::zeros(k, k);
    for j in 0..=lag.min(t.saturating_sub(1)) {
        let w = bartlett_weight(j, lag);
        let mut gamma = DMatrix::<f64>::zeros(k, k);
        for i in j..t {
            gamma += &scores[i] * scores[i - j].transpose();
        }
        if j == 0 {
            s += gamma;
        } else {
            s += (&gamma + gamma.transpose()) * w;
        }
    }
    let scale = t as f64 / (t as f64 - k as f64);
    xtx_inv * s * xtx_inv * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        assert_eq!(bartlett_weight(0, 3), 1.0);
        assert_eq!(bartlett_weight(1, 3), 0.75);
        assert_eq!(bartlett_weight(3, 3), 0.25);
        assert_eq!(bartlett_weight(4, 3), 0.0);
    }

    #[test]
    fn lag_zero_is_sd_over_root_t() {
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        // sample variance 3.5
        let oracle = (3.5f64 / 6.0).sqrt();
        assert!((nw_mean_se(&b, 0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn lag_three_hand_sum() {
        // deviations from 3.5: -2.5 -1.5 -0.5 0.5 1.5 2.5
        // γ0 = 17.5/6, γ1 = 8.75/6, γ2 = 1.0/6, γ3 = -4.75/6
        let g: [f64; 4] = [17.5 / 6.0, 8.75 / 6.0, 1.0 / 6.0, -4.75 / 6.0];
        let s = g[0] + 2.0 * (0.75 * g[1] + 0.5 * g[2] + 0.25 * g[3]);
        let oracle = (s / 6.0 * 6.0 / 5.0).sqrt();
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!((nw_mean_se(&b, 3) - oracle).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_regression_matches_mean_se() {
        let b = [0.3, -1.2, 2.5, 0.7, 1.1, -0.4, 0.9, 2.2];
        let mean = b.iter().sum::<f64>() / 8.0;
        let x = DMatrix::from_element(8, 1, 1.0);
        let resid: Vec<f64> = b.iter().map(|v| v - mean).collect();
        let inv = DMatrix::from_element(1, 1, 1.0 / 8.0);
        let v = nw_ols_vcov(&x, &resid, &inv, 3);
        assert!((v[(0, 0)].sqrt() - nw_mean_se(&b, 3)).abs() < 1e-12);
    }
}
