//! Four-quarter rolling regressions on a coefficient that drifts upward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskscope::econometrics::table::rolling_table;
use riskscope::econometrics::{rolling_regression, FeSpec, PanelDataset, RegressionSpec};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut firm, mut period, mut industry, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for q in 0..12 {
        let beta = 2.0 * q as f64 / 11.0;
        for f in 0..200 {
            let xi: f64 = rng.random_range(-1.0..1.0);
            firm.push(format!("F{f}"));
            period.push(format!("2019Q1+{q:02}"));
            industry.push(Some(format!("S{}", f % 8)));
            x.push(xi);
            y.push(beta * xi + rng.random_range(-2.0..2.0));
        }
    }
    let mut panel = PanelDataset::new(firm, period).unwrap();
    panel.add_numeric("AIRiskAssess", x).unwrap();
    panel.add_numeric("implied_vol", y).unwrap();
    panel.add_categorical("industry", industry).unwrap();
    let spec = RegressionSpec::new("implied_vol", &["AIRiskAssess"]).fe(FeSpec::time_industry());
    let rows = rolling_regression(&panel, 4, &spec).unwrap();
    print!("{}", rolling_table("A", &rows).render_text());
}
