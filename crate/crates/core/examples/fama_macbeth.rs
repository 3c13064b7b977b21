//! Monthly cross-sectional regressions with Newey-West inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use riskscope::econometrics::table::fmb_table;
use riskscope::econometrics::{fama_macbeth, trim_regressors, CrossSection};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = Normal::new(0.0, 1.0).unwrap();
    let lambda = 0.3;
    let mut sections: Vec<CrossSection> = (0..60)
        .map(|m| {
            let x: Vec<f64> = (0..500).map(|_| z.sample(&mut rng)).collect();
            let shock = z.sample(&mut rng);
            let y = x.iter().map(|xi| shock + lambda * xi + 4.0 * z.sample(&mut rng)).collect();
            CrossSection { period: format!("m{m:02}"), y, x: vec![x] }
        })
        .collect();
    trim_regressors(&mut sections, 0.01, 0.99);
    let res = fama_macbeth(&sections, &["log_exposure"], 3).unwrap();
    print!("{}", fmb_table("priced characteristic, true slope 0.3", &res).render_text());
}
