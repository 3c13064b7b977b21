//! Sort firms into exposure quintiles each March and regress the portfolio
//! returns on the five factors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use riskscope::econometrics::table::alpha_table;
use riskscope::econometrics::{five_factor_alpha, quintile_portfolios, FactorRow};
use riskscope::quarter::Month;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let z = Normal::new(0.0, 1.0).unwrap();
    let months: Vec<Month> = (0..60).map(|k| Month { year: 2016, month: 1 }.add(k)).collect();
    let factors: Vec<FactorRow> = months
        .iter()
        .map(|&month| FactorRow {
            month,
            mkt_rf: 4.0 * z.sample(&mut rng),
            smb: 2.0 * z.sample(&mut rng),
            hml: 2.0 * z.sample(&mut rng),
            rmw: 1.5 * z.sample(&mut rng),
            cma: 1.5 * z.sample(&mut rng),
            rf: 0.1,
        })
        .collect();
    // Expected return rises with exposure.
    let firms: Vec<String> = (0..50).map(|i| format!("F{i:02}")).collect();
    let mut annual = Vec::new();
    let mut returns = Vec::new();
    for (i, f) in firms.iter().enumerate() {
        for year in 2015..2020 {
            annual.push((f.clone(), year, 0.001 * (i + 1) as f64));
        }
        for fr in &factors {
            let r = fr.rf + fr.mkt_rf + 0.02 * i as f64 + 3.0 * z.sample(&mut rng);
            returns.push((f.clone(), fr.month, r));
        }
    }
    let res = quintile_portfolios(&annual, &returns, 12).unwrap();
    let mut rows = Vec::new();
    for q in 1..=5 {
        rows.push(("demo".to_string(), format!("Q{q}"), five_factor_alpha(&res.series(q), &factors, true, 3).unwrap()));
    }
    rows.push(("demo".to_string(), "HML".to_string(), five_factor_alpha(&res.hml_series(), &factors, false, 3).unwrap()));
    print!("{}", alpha_table(&rows).render_text());
}
