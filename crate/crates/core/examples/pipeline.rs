//! Run every pipeline stage on the bundled fixture into a scratch directory.
//!
//! cargo run --example pipeline -- [output_dir]

use std::path::{Path, PathBuf};

use riskscope::pipeline::{run, PipelineConfig, Target};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("riskscope-demo"));
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/config.toml");
    let cfg = PipelineConfig::load(&fixture, &[format!("output_dir=\"{}\"", out.display())])?;
    for o in run(Target::All, &cfg)? {
        println!("{:<10} skipped={:<5} provider_calls={}", o.stage.name(), o.skipped, o.provider_calls);
    }
    let table = std::fs::read_to_string(out.join("tables/variance_decomposition.txt"))?;
    println!("\n{table}");
    Ok(())
}
