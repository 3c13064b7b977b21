//! Prompt construction, completion providers and risk-document assembly.

pub mod cache;
pub mod prompts;
pub mod provider;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, CompletionCache};
pub use prompts::{build_prompt, excerpt_of, task_header, task_of, PromptSpec, EXCERPT_MARKER, NO_EXTERNAL_KNOWLEDGE};
pub use provider::{
    HttpReply, LiveProvider, Provider, RetryPolicy, StubProvider, StubRule, Transport, UreqTransport, API_KEY_ENV,
};

use crate::transcript::Chunk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskType {
    Political,
    Climate,
    Ai,
}

impl RiskType {
    pub const ALL: [RiskType; 3] = [RiskType::Political, RiskType::Climate, RiskType::Ai];

    /// Column prefix used in exposure tables: P, C or AI.
    pub fn prefix(self) -> &'static str {
        match self {
            RiskType::Political => "P",
            RiskType::Climate => "C",
            RiskType::Ai => "AI",
        }
    }
}

impl fmt::Display for RiskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskType::Political => "political",
            RiskType::Climate => "climate",
            RiskType::Ai => "ai",
        })
    }
}

impl FromStr for RiskType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "political" => Ok(RiskType::Political),
            "climate" => Ok(RiskType::Climate),
            "ai" => Ok(RiskType::Ai),
            _ => Err(format!("unknown risk type {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Summary,
    Assessment,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Summary, Mode::Assessment];

    /// Column suffix: Sum or Assess.
    pub fn suffix(self) -> &'static str {
        match self {
            Mode::Summary => "Sum",
            Mode::Assessment => "Assess",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Summary => "summary",
            Mode::Assessment => "assessment",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "summary" => Ok(Mode::Summary),
            "assessment" => Ok(Mode::Assessment),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

/// Exposure column name such as `PRiskSum` or `AIRiskAssess`.
pub fn measure_name(risk: RiskType, mode: Mode) -> String {
    format!("{}Risk{}", risk.prefix(), mode.suffix())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    /// `None` leaves output length unrestricted.
    pub max_output_tokens: Option<u32>,
    pub model_id: String,
}

impl CompletionRequest {
    /// Temperature is always zero.
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self { prompt: prompt.into(), temperature: 0.0, max_output_tokens: None, model_id: model_id.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskDocument {
    pub call_id: String,
    pub risk_type: RiskType,
    pub mode: Mode,
    /// Non-NA outputs joined by newlines, in chunk order.
    pub text: String,
    /// Raw output for every chunk, NA included.
    pub chunk_outputs: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s), status {status:?}: {message}")]
    Transport { status: Option<u16>, attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("completion cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
#[error("chunk {chunk_index}: {source}")]
pub struct GatewayError {
    pub chunk_index: usize,
    #[source]
    pub source: ProviderError,
}

/// True when the output is the "no relevant content" marker: `NA` in any
/// case, ignoring surrounding whitespace and trailing `.` or `!`.
pub fn is_na(output: &str) -> bool {
    output.trim().trim_end_matches(['.', '!']).trim_end().eq_ignore_ascii_case("na")
}

/// Join the non-NA outputs, in order, with single newlines.
pub fn purge_na(outputs: &[String]) -> String {
    outputs.iter().filter(|o| !is_na(o)).map(|o| o.trim()).collect::<Vec<_>>().join("\n")
}

/// Provider plus cache plus bounded fan-out.
pub struct Gateway<'a> {
    provider: &'a dyn Provider,
    cache: &'a CompletionCache,
    model_id: String,
    parallelism: usize,
    cache_hits: AtomicUsize,
}

pub const DEFAULT_PARALLELISM: usize = 4;

impl<'a> Gateway<'a> {
    pub fn new(provider: &'a dyn Provider, cache: &'a CompletionCache, model_id: impl Into<String>) -> Self {
        Self {
            provider,
            cache,
            model_id: model_id.into(),
            parallelism: DEFAULT_PARALLELISM,
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Serve from cache when possible; otherwise ask the provider and write
    /// the answer through.
    pub fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let key = cache_key(&req.model_id, &req.prompt);
        if let Some(hit) = self.cache.get(&key)? {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let out = self.provider.complete(req)?;
        self.cache.put(&key, &out)?;
        Ok(out)
    }

    /// Run every chunk of one call through the prompt for `spec` and pool
    /// the answers. Requests fan out over at most `parallelism` workers;
    /// outputs are reassembled in chunk order.
    pub fn generate_risk_document(&self, chunks: &[Chunk], spec: &PromptSpec) -> Result<RiskDocument, GatewayError> {
        let call_id = chunks.first().map(|c| c.source_call_id.clone()).unwrap_or_default();
        let requests: Vec<CompletionRequest> =
            chunks.iter().map(|c| CompletionRequest::new(build_prompt(c, spec), self.model_id.clone())).collect();

        let results: Vec<Mutex<Option<Result<String, ProviderError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.parallelism.min(requests.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= requests.len() {
                        break;
                    }
                    let r = self.complete(&requests[i]);
                    let failed = r.is_err();
                    *results[i].lock().unwrap() = Some(r);
                    if failed {
                        break;
                    }
                });
            }
        });

        let mut outputs = Vec::with_capacity(chunks.len());
        for (chunk, slot) in chunks.iter().zip(results) {
            match slot.into_inner().unwrap() {
                Some(Ok(o)) => outputs.push(o),
                Some(Err(source)) => return Err(GatewayError { chunk_index: chunk.chunk_index, source }),
                // A worker stopped after an earlier failure; that failure is reported first.
                None => unreachable!("unfilled slot precedes every reported failure"),
            }
        }
        Ok(RiskDocument { call_id, risk_type: spec.risk_type, mode: spec.mode, text: purge_na(&outputs), chunk_outputs: outputs })
    }
}
