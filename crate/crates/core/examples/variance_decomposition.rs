//! Share of a measure's variance due to time, industry and firm effects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskscope::econometrics::table::decomposition_table;
use riskscope::econometrics::{variance_decomposition, PanelDataset};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut firm, mut period, mut industry) = (Vec::new(), Vec::new(), Vec::new());
    let (mut timed, mut noisy) = (Vec::new(), Vec::new());
    for f in 0..150 {
        for q in 0..8 {
            firm.push(format!("F{f}"));
            period.push(format!("Q{q}"));
            industry.push(Some(format!("S{}", f % 10)));
            timed.push(q as f64 * 0.5);
            noisy.push(rng.random_range(0.0..1.0));
        }
    }
    let mut panel = PanelDataset::new(firm, period).unwrap();
    panel.add_categorical("industry", industry).unwrap();
    panel.add_numeric("quarter_driven", timed).unwrap();
    panel.add_numeric("idiosyncratic", noisy).unwrap();
    let decomps = ["quarter_driven", "idiosyncratic"].map(|m| variance_decomposition(&panel, m, "industry").unwrap());
    print!("{}", decomposition_table(&decomps).render_text());
}
