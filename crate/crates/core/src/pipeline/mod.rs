//! Resumable stage runner driven by one TOML config.
//!
//! Every stage reads the artifacts of the stages before it from the output
//! directory, writes its own atomically, and records content hashes in
//! `manifest.json`. A stage whose config section and inputs are unchanged
//! is skipped.

pub mod config;
pub mod manifest;
mod stages;

use std::fmt;
use std::str::FromStr;

pub use config::{ConfigError, PipelineConfig, ProviderKind};
pub use manifest::{RunManifest, StageRecord, MANIFEST_FILE, TOOL_VERSION};
pub use stages::{lead_name, read_panel_csv, ExposureRow, OUTCOME_COLUMNS};

use crate::econometrics::EstimationError;
use crate::exposure::ExposureError;
use crate::llm::{GatewayError, ProviderError};
use crate::outcomes::OutcomeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Chunk,
    Generate,
    Measure,
    Panel,
    Regress,
    Vardecomp,
    Rolling,
    Fmb,
    Portfolio,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Chunk,
        Stage::Generate,
        Stage::Measure,
        Stage::Panel,
        Stage::Regress,
        Stage::Vardecomp,
        Stage::Rolling,
        Stage::Fmb,
        Stage::Portfolio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Chunk => "chunk",
            Stage::Generate => "generate",
            Stage::Measure => "measure",
            Stage::Panel => "panel",
            Stage::Regress => "regress",
            Stage::Vardecomp => "vardecomp",
            Stage::Rolling => "rolling",
            Stage::Fmb => "fmb",
            Stage::Portfolio => "portfolio",
        }
    }

    /// Config keys of optional inputs the stage cannot run without.
    pub fn required_paths(self) -> &'static [&'static str] {
        match self {
            Stage::Panel => &["paths.returns", "paths.market", "paths.fundamentals"],
            Stage::Fmb => &["paths.returns"],
            Stage::Portfolio => &["paths.returns", "paths.factors"],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage name or `all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    One(Stage),
    All,
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Target::All);
        }
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .map(Target::One)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} needs {artifact}; run `{producer}` first")]
    Prerequisite { stage: Stage, producer: Stage, artifact: String },
    #[error("data: {0}")]
    Data(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error("estimation: {0}")]
    Estimation(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Prerequisite { .. } | PipelineError::Data(_) => 3,
            PipelineError::Provider(_) => 4,
            PipelineError::Estimation(_) => 5,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<ExposureError> for PipelineError {
    fn from(e: ExposureError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<OutcomeError> for PipelineError {
    fn from(e: OutcomeError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<ProviderError> for PipelineError {
    fn from(e: ProviderError) -> Self {
        PipelineError::Provider(e.to_string())
    }
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        PipelineError::Provider(e.to_string())
    }
}

impl From<EstimationError> for PipelineError {
    fn from(e: EstimationError) -> Self {
        PipelineError::Estimation(e.to_string())
    }
}

/// What one stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Up to date already; nothing was recomputed.
    pub skipped: bool,
    /// Completions requested from the provider (cache misses).
    pub provider_calls: usize,
    /// Artifacts, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Run one stage, or every stage in order.
///
/// Under `all`, a stage whose optional inputs are not configured is left
/// out with a warning instead of failing the run.
pub fn run(target: Target, cfg: &PipelineConfig) -> Result<Vec<StageOutcome>, PipelineError> {
    let out = cfg.output();
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::load(&out);
    let stages: Vec<Stage> = match target {
        Target::One(s) => vec![s],
        Target::All => Stage::ALL.to_vec(),
    };
    let mut outcomes = Vec::new();
    for stage in stages {
        if let Some(missing) = stage.required_paths().iter().find(|k| cfg.require(k).is_err()) {
            if target == Target::All {
                log::warn!("skipping {stage}: {missing} is not set");
                continue;
            }
            return Err(ConfigError::new(*missing, format!("required by stage {stage} but not set")).into());
        }
        let outcome = stages::run_stage(stage, cfg, &mut manifest)?;
        log::info!(
            "{stage}: {} ({} provider calls)",
            if outcome.skipped { "up to date" } else { "done" },
            outcome.provider_calls
        );
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
