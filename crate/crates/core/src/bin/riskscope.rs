use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use riskscope::pipeline::{run, PipelineConfig, Target};

/// Run one pipeline stage, or `all` of them in order.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// ingest, chunk, generate, measure, panel, regress, vardecomp, rolling, fmb, portfolio or all
    stage: Target,
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set chunking.input_budget=1500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match PipelineConfig::load(&cli.config, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(cli.stage, &cfg) {
        Ok(outcomes) => {
            for o in outcomes {
                println!(
                    "{:<10} {:<11} provider_calls={} artifacts={}",
                    o.stage.name(),
                    if o.skipped { "up-to-date" } else { "done" },
                    o.provider_calls,
                    o.artifacts.len()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
