//! Regenerate the bundled synthetic fixture.
//!
//! cargo run --example generate_fixture -- [dir] [seed]

use std::path::PathBuf;

use riskscope::synth::{write_fixture, FIXTURE_SEED};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic"));
    let seed = args.next().map(|s| s.parse().expect("seed must be an integer")).unwrap_or(FIXTURE_SEED);
    write_fixture(&dir, seed)?;
    println!("fixture written to {}", dir.display());
    Ok(())
}
