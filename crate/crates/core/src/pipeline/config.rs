use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::econometrics::FeSpec;
use crate::exposure::{BIGRAM_MEASURES, GPT_MEASURES};
use crate::llm::provider::{RetryPolicy, API_KEY_ENV};

/// A configuration problem, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config {path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub returns: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub fundamentals: Option<PathBuf>,
    pub activity: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub ppi: Option<PathBuf>,
    pub benchmarks: Option<PathBuf>,
    /// Monthly firm characteristics for cross-sectional controls.
    pub characteristics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub stub_rules: Option<PathBuf>,
    pub model_id: String,
    pub endpoint: String,
    pub parallelism: usize,
    /// Defaults to `cache` inside the output directory.
    pub cache_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Stub,
            stub_rules: None,
            model_id: "gpt-3.5-turbo-0125".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            parallelism: crate::llm::DEFAULT_PARALLELISM,
            cache_dir: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingConfig {
    pub input_budget: usize,
    pub min_tokens: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self { input_budget: crate::transcript::DEFAULT_INPUT_BUDGET, min_tokens: crate::transcript::DEFAULT_MIN_TOKENS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Treat any unparseable record as fatal.
    pub strict: bool,
}

/// Replacement text for parts of one measure's prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PromptOverride {
    pub preamble: Option<String>,
    pub risk_explanation: Option<String>,
    pub sample_questions: Option<Vec<String>>,
}

fn all_measures() -> Vec<String> {
    GPT_MEASURES.iter().chain(&BIGRAM_MEASURES).map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub winsor: Option<[f64; 2]>,
    /// Fixed-effect specs; one column of results per spec.
    pub fe: Vec<String>,
    pub controls: Vec<String>,
    pub cluster: Option<String>,
    /// Exposure columns to use; bigram columns are skipped when absent.
    pub measures: Vec<String>,
    /// Quarters between the exposure and the outcome it predicts.
    pub lead: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            winsor: Some([0.01, 0.99]),
            fe: vec!["time".into(), "time_industry".into(), "time_x_industry".into()],
            controls: vec!["log_assets".into()],
            cluster: Some("firm".into()),
            measures: all_measures(),
            lead: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RollingConfig {
    pub window: usize,
    pub fe: String,
    pub outcome: String,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self { window: 4, fe: "time_industry".into(), outcome: "implied_vol".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FmbConfig {
    /// `r01`, `r212` or any column of the characteristics file.
    pub controls: Vec<String>,
    pub trim: Option<[f64; 2]>,
    pub nw_lag: usize,
}

impl Default for FmbConfig {
    fn default() -> Self {
        Self { controls: vec!["r01".into(), "r212".into()], trim: Some([0.01, 0.99]), nw_lag: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioConfig {
    pub hold_months: usize,
    pub nw_lag: usize,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self { hold_months: 12, nw_lag: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    /// Keyed by measure name, e.g. `PRiskSum`.
    #[serde(default)]
    pub prompts: BTreeMap<String, PromptOverride>,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub rolling: RollingConfig,
    #[serde(default)]
    pub fmb: FmbConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Parse `raw` as a TOML value, falling back to a plain string.
fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply `key.path=value` to a TOML table, creating tables as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new(assignment, "override must look like key.path=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "empty key segment"));
    }
    let mut cur = table;
    for (i, p) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(parts[..=i].join("."), "is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), override_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    /// Read, override and validate a config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base, overrides)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("<file>", e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let de = toml::Value::Table(table);
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().message().to_string())
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Completion cache location. The default is kept per provider kind so
    /// stub answers are never served to a live run.
    pub fn cache_dir(&self) -> PathBuf {
        match &self.provider.cache_dir {
            Some(d) => self.resolve(d),
            None => self.output().join("cache").join(match self.provider.kind {
                ProviderKind::Stub => "stub",
                ProviderKind::Live => "live",
            }),
        }
    }

    /// Named input paths that are set, in a fixed order.
    pub fn input_paths(&self) -> Vec<(&'static str, &PathBuf)> {
        let p = &self.paths;
        let mut out = vec![("paths.corpus", &p.corpus)];
        for (k, v) in [
            ("paths.returns", &p.returns),
            ("paths.market", &p.market),
            ("paths.fundamentals", &p.fundamentals),
            ("paths.activity", &p.activity),
            ("paths.factors", &p.factors),
            ("paths.ppi", &p.ppi),
            ("paths.benchmarks", &p.benchmarks),
            ("paths.characteristics", &p.characteristics),
        ] {
            if let Some(v) = v {
                out.push((k, v));
            }
        }
        if let Some(r) = &self.provider.stub_rules {
            out.push(("provider.stub_rules", r));
        }
        out
    }

    /// A required optional path, or a config error naming it.
    pub fn require(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.input_paths()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, p)| self.resolve(p))
            .ok_or_else(|| ConfigError::new(key, "required by this stage but not set"))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (key, p) in self.input_paths() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(ConfigError::new(key, format!("file {} does not exist", full.display())));
            }
        }
        if self.provider.kind == ProviderKind::Live
            && std::env::var(API_KEY_ENV).map(|v| v.trim().is_empty()).unwrap_or(true)
        {
            return Err(ConfigError::new("provider.kind", format!("live provider requires {API_KEY_ENV}")));
        }
        if self.provider.parallelism == 0 {
            return Err(ConfigError::new("provider.parallelism", "must be at least 1"));
        }
        if self.provider.retry.max_attempts == 0 {
            return Err(ConfigError::new("provider.retry.max_attempts", "must be at least 1"));
        }
        let c = self.chunking;
        if c.input_budget == 0 || c.min_tokens > c.input_budget {
            return Err(ConfigError::new("chunking", "need 0 < min_tokens ≤ input_budget"));
        }
        let bounds = |key: &str, b: Option<[f64; 2]>| match b {
            Some([lo, hi]) if !(0.0 <= lo && lo < hi && hi <= 1.0) => {
                Err(ConfigError::new(key, format!("bounds [{lo}, {hi}] must satisfy 0 ≤ low < high ≤ 1")))
            }
            _ => Ok(()),
        };
        bounds("estimation.winsor", self.estimation.winsor)?;
        bounds("fmb.trim", self.fmb.trim)?;
        for (i, fe) in self.estimation.fe.iter().enumerate() {
            fe.parse::<FeSpec>().map_err(|e| ConfigError::new(format!("estimation.fe[{i}]"), e.to_string()))?;
        }
        self.rolling.fe.parse::<FeSpec>().map_err(|e| ConfigError::new("rolling.fe", e.to_string()))?;
        if self.rolling.window == 0 {
            return Err(ConfigError::new("rolling.window", "must be at least 1"));
        }
        if self.portfolio.hold_months == 0 || self.portfolio.hold_months > 12 {
            return Err(ConfigError::new("portfolio.hold_months", "must be between 1 and 12"));
        }
        let known = all_measures();
        for (i, m) in self.estimation.measures.iter().enumerate() {
            if !known.contains(m) {
                return Err(ConfigError::new(format!("estimation.measures[{i}]"), format!("unknown measure {m}")));
            }
        }
        for k in self.prompts.keys() {
            if !GPT_MEASURES.contains(&k.as_str()) {
                return Err(ConfigError::new(format!("prompts.{k}"), "not a generated measure"));
            }
        }
        Ok(())
    }

    /// Canonical JSON of selected parts, for stage fingerprints.
    pub fn section_json(&self, section: &str) -> serde_json::Value {
        let full = serde_json::to_value(self).expect("config serializes");
        full.get(section).cloned().unwrap_or(serde_json::Value::Null)
    }
}
