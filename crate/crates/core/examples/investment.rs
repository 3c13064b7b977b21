//! Capital stock recursion and the investment ratio.

use riskscope::outcomes::{investment_series, DEPRECIATION};

fn main() {
    // Capex that exactly replaces depreciation keeps the ratio fixed.
    let steady = investment_series(100.0, &vec![(10.0, 0.0); 8], DEPRECIATION).unwrap();
    println!("steady state: {:?}", steady.iter().map(|r| format!("{:.4}", r.unwrap())).collect::<Vec<_>>());

    // A missing capex quarter and some inflation.
    let flows = [(12.0, 0.01), (f64::NAN, 0.005), (9.0, 0.0), (15.0, 0.02)];
    for (q, r) in investment_series(100.0, &flows, DEPRECIATION).unwrap().iter().enumerate() {
        println!("quarter {q}: {}", r.map_or("missing".to_string(), |v| format!("{v:.4}")));
    }
}
