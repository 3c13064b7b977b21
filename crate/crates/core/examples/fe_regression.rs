//! Panel regression with absorbed fixed effects and firm-clustered errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskscope::econometrics::table::regression_table;
use riskscope::econometrics::{panel_regression, FeSpec, PanelDataset, RegressionSpec};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (firms, quarters) = (60, 12);
    let mut firm = Vec::new();
    let mut period = Vec::new();
    let mut industry = Vec::new();
    let (mut risk, mut size, mut vol) = (Vec::new(), Vec::new(), Vec::new());
    let quarter_shock: Vec<f64> = (0..quarters).map(|_| rng.random_range(-0.05..0.05)).collect();
    for f in 0..firms {
        let firm_level: f64 = rng.random_range(0.0..0.1);
        for q in 0..quarters {
            firm.push(format!("F{f:03}"));
            period.push(format!("Q{q:02}"));
            industry.push(Some(format!("S{}", f % 6)));
            let r = rng.random_range(0.0..0.02);
            let s: f64 = rng.random_range(5.0..10.0);
            risk.push(r);
            size.push(s);
            vol.push(0.2 + 3.0 * r - 0.01 * s + quarter_shock[q] + firm_level + rng.random_range(-0.02..0.02));
        }
    }
    let mut panel = PanelDataset::new(firm, period).unwrap();
    panel.add_numeric("risk", risk).unwrap();
    panel.add_numeric("log_assets", size).unwrap();
    panel.add_numeric("vol", vol).unwrap();
    panel.add_categorical("industry", industry).unwrap();

    let mut models = Vec::new();
    for fe in [FeSpec::time(), FeSpec::time_industry(), FeSpec::time_x_industry(), "time+firm".parse().unwrap()] {
        let spec = RegressionSpec::new("vol", &["risk"]).controls(&["log_assets"]).fe(fe);
        models.push(("vol on risk".to_string(), panel_regression(&panel, &spec).unwrap()));
    }
    print!("{}", regression_table(&models).render_text());
}
