use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompts::{excerpt_of, task_of};
use super::{CompletionRequest, Mode, ProviderError, RiskType};

/// Environment variable holding the live provider's credential.
pub const API_KEY_ENV: &str = "RISKSCOPE_API_KEY";

pub trait Provider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;

    /// Number of completions actually requested from this provider.
    fn calls(&self) -> usize;
}

/// One stub rule. `contains` is matched against the transcript excerpt of
/// the prompt; `risk_type` and `mode`, when set, must match the prompt's
/// task header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    pub contains: String,
    pub respond: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_type: Option<RiskType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

impl StubRule {
    pub fn new(contains: impl Into<String>, respond: impl Into<String>) -> Self {
        Self { contains: contains.into(), respond: respond.into(), risk_type: None, mode: None }
    }
}

/// Deterministic offline provider: the first matching rule answers,
/// otherwise `"NA"`.
#[derive(Debug, Default)]
pub struct StubProvider {
    rules: Vec<StubRule>,
    calls: AtomicUsize,
}

impl StubProvider {
    pub fn new(rules: Vec<StubRule>) -> Self {
        Self { rules, calls: AtomicUsize::new(0) }
    }

    /// Parse a JSON rule list `[{"contains": .., "respond": ..}, ..]`.
    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let rules: Vec<StubRule> =
            serde_json::from_str(json).map_err(|e| ProviderError::Config(format!("stub rules: {e}")))?;
        Ok(Self::new(rules))
    }

    pub fn rules(&self) -> &[StubRule] {
        &self.rules
    }

    fn respond(&self, prompt: &str) -> &str {
        let excerpt = excerpt_of(prompt);
        let task = task_of(prompt);
        self.rules
            .iter()
            .find(|r| {
                r.risk_type.is_none_or(|rt| task.is_some_and(|(t, _)| t == rt))
                    && r.mode.is_none_or(|m| task.is_some_and(|(_, tm)| tm == m))
                    && excerpt.contains(&r.contains)
            })
            .map_or("NA", |r| r.respond.as_str())
    }
}

impl Provider for StubProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.respond(&req.prompt).to_string())
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Raw HTTP outcome: status code and body text.
pub type HttpReply = (u16, String);

/// Posts a JSON body. Transport failures (no status at all) are `Err`.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, String> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 6, base_delay_ms: 1000, max_delay_ms: 60_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base·2^(retry−1), capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

fn is_transient(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

/// Chat-completions style HTTP provider.
pub struct LiveProvider {
    endpoint: String,
    api_key: String,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    calls: AtomicUsize,
    attempts: AtomicUsize,
}

impl std::fmt::Debug for LiveProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveProvider").field("endpoint", &self.endpoint).field("retry", &self.retry).finish()
    }
}

impl LiveProvider {
    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, retry: RetryPolicy) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::Config(format!("live provider requires {API_KEY_ENV}")))?;
        Ok(Self::with_transport(endpoint, key, Box::new(UreqTransport::default()), retry))
    }

    pub fn with_transport(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        transport: Box<dyn Transport>,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            transport,
            retry,
            calls: AtomicUsize::new(0),
            attempts: AtomicUsize::new(0),
        }
    }

    /// HTTP attempts made so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn request_body(req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": req.model_id,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        if let Some(max) = req.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }

    fn extract(body: &str) -> Result<String, ProviderError> {
        let v: Value = serde_json::from_str(body).map_err(|e| ProviderError::Response(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Response("no choices[0].message.content".into()))
    }
}

impl Provider for LiveProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let body = Self::request_body(req);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let (status, message) = match self.transport.post_json(&self.endpoint, &self.api_key, &body) {
                Ok((status, text)) if (200..300).contains(&status) => return Self::extract(&text),
                Ok((status, text)) if !is_transient(status) => {
                    return Err(ProviderError::Transport { status: Some(status), attempts: attempt, message: text });
                }
                Ok((status, text)) => (Some(status), text),
                Err(e) => (None, e),
            };
            log::warn!("completion attempt {attempt} failed (status {status:?}): {message}");
            if attempt >= self.retry.max_attempts {
                return Err(ProviderError::Transport { status, attempts: attempt, message });
            }
            std::thread::sleep(self.retry.delay(attempt));
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<HttpReply, String>>>,
        seen: Mutex<Vec<Value>>,
    }

    impl Transport for Scripted {
        fn post_json(&self, _url: &str, bearer: &str, body: &Value) -> Result<HttpReply, String> {
            assert_eq!(bearer, "secret");
            self.seen.lock().unwrap().push(body.clone());
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("Task: political risk summary\n\nExcerpt:\nhello", "gpt-3.5-turbo")
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy { max_attempts: 5, base_delay_ms: 0, max_delay_ms: 0 }
    }

    #[test]
    fn retries_429_then_succeeds() {
        let t = Scripted {
            replies: Mutex::new(vec![
                Ok((429, "slow down".into())),
                Ok((429, "slow down".into())),
                Ok((200, ok_body("risk text"))),
            ]),
            seen: Mutex::new(vec![]),
        };
        let p = LiveProvider::with_transport("http://x", "secret", Box::new(t), no_wait());
        assert_eq!(p.complete(&req()).unwrap(), "risk text");
        assert_eq!(p.attempts(), 3);
        assert_eq!(p.calls(), 1);
    }

    #[test]
    fn exhausted_retries_carry_status() {
        let t = Scripted { replies: Mutex::new(vec![Ok((503, "down".into())); 5]), seen: Mutex::new(vec![]) };
        let p = LiveProvider::with_transport("http://x", "secret", Box::new(t), no_wait());
        match p.complete(&req()) {
            Err(ProviderError::Transport { status: Some(503), attempts: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Scripted { replies: Mutex::new(vec![Ok((401, "bad key".into()))]), seen: Mutex::new(vec![]) };
        let p = LiveProvider::with_transport("http://x", "secret", Box::new(t), no_wait());
        assert!(matches!(p.complete(&req()), Err(ProviderError::Transport { status: Some(401), attempts: 1, .. })));
    }

    #[test]
    fn wire_format() {
        let body = LiveProvider::request_body(&req());
        assert_eq!(body["model"], "gpt-3.5-turbo");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert!(body["messages"][0]["content"].as_str().unwrap().ends_with("hello"));
        assert!(body.get("max_tokens").is_none());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let r = RetryPolicy { max_attempts: 10, base_delay_ms: 100, max_delay_ms: 1000 };
        let d: Vec<u64> = (1..=6).map(|i| r.delay(i).as_millis() as u64).collect();
        assert_eq!(d, vec![100, 200, 400, 800, 1000, 1000]);
        assert_eq!(r.delay(200).as_millis(), 1000);
    }

    #[test]
    fn missing_credential_is_config_error() {
        // SAFETY: tests in this module do not read the variable concurrently.
        unsafe { std::env::remove_var(API_KEY_ENV) };
        assert!(matches!(LiveProvider::from_env("http://x", no_wait()), Err(ProviderError::Config(_))));
    }

    #[test]
    fn stub_rules_match_excerpt_and_filters() {
        let mut climate_only = StubRule::new("storm", "Storm damage risk.");
        climate_only.risk_type = Some(RiskType::Climate);
        let stub = StubProvider::new(vec![climate_only, StubRule::new("regulation", "Reg risk.")]);
        let mk = |task: &str, text: &str| CompletionRequest::new(format!("Task: {task}\n\nExcerpt:\n{text}"), "m");
        assert_eq!(stub.complete(&mk("climate risk summary", "a storm hit")).unwrap(), "Storm damage risk.");
        assert_eq!(stub.complete(&mk("political risk summary", "a storm hit")).unwrap(), "NA");
        assert_eq!(stub.complete(&mk("ai risk assessment", "new regulation")).unwrap(), "Reg risk.");
        assert_eq!(stub.calls(), 3);
        let parsed = StubProvider::from_json(r#"[{"contains":"x","respond":"y"}]"#).unwrap();
        assert_eq!(parsed.rules().len(), 1);
        assert!(StubProvider::from_json("{").is_err());
    }
}
