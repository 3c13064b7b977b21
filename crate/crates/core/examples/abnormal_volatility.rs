//! Post-call abnormal volatility from market-model residuals.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use riskscope::outcomes::{abnormal_volatility, realized_volatility, DailySeries, REALIZED_HORIZON_DAYS};
use riskscope::quarter::Quarter;
use riskscope::synth::business_days;

fn main() {
    let days = business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2021, 12, 31).unwrap());
    let call = NaiveDate::from_ymd_opt(2021, 7, 27).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mkt = Normal::new(0.0004, 0.01).unwrap();
    let eps = Normal::new(0.0, 0.015).unwrap();
    let m: Vec<f64> = days.iter().map(|_| mkt.sample(&mut rng)).collect();
    let firm: Vec<f64> = days
        .iter()
        .zip(&m)
        .map(|(d, mr)| {
            let scale = if *d > call { 1.8 } else { 1.0 };
            0.0001 + 1.1 * mr + scale * eps.sample(&mut rng)
        })
        .collect();
    let market = DailySeries::new(days.iter().copied().zip(m).collect()).unwrap();
    let firm = DailySeries::new(days.iter().copied().zip(firm).collect()).unwrap();
    println!("abnormal volatility after {call}: {:.4}", abnormal_volatility(&firm, &market, call).unwrap());
    let q = Quarter::containing(call);
    println!("realized volatility after {q}: {:.4}", realized_volatility(&firm, q.end_date(), REALIZED_HORIZON_DAYS).unwrap());
}
