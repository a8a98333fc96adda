//! Chat-completion backends: a deterministic scripted mock and an
//! OpenAI-compatible HTTP client, behind one retrying, token-accounting
//! facade.
//!
//! The mock replays a JSONL script and lets the whole evolution pipeline run
//! end-to-end with zero network access. The HTTP provider speaks the
//! `/chat/completions` wire format against any conforming endpoint.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("request validation failed: {0}")]
    Validation(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimit(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

impl BackendError {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            Self::RateLimit(_) | Self::Timeout(_) | Self::Transient(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        if self.model_id.is_empty() {
            return Err(BackendError::Validation("model_id is empty".into()));
        }
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(BackendError::Validation(
                "at least one user message is required".into(),
            ));
        }
        if self.messages.iter().skip(1).any(|m| m.role == Role::System) {
            return Err(BackendError::Validation(
                "only the first message may be a system message".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 || self.max_tokens == 0 {
            return Err(BackendError::Validation(
                "temperature must be >= 0 and max_tokens positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

/// Whitespace token count; the accounting unit when a provider reports no
/// usage of its own.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// One backend attempt, without retries or accounting.
pub trait ChatProvider: Send + Sync {
    fn complete_once(&self, request: &ChatRequest) -> Result<CompletionResult, BackendError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn complete_once(&self, request: &ChatRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete_once(request)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UsageEntry {
    pub calls: u64,
    pub failed_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub retries: u64,
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            permits: Mutex::new(max.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}

/// Retrying, token-accounting facade over a provider. Shareable across
/// worker threads; the ledger and the in-flight limiter are the only mutable
/// state.
pub struct Backend {
    provider: Box<dyn ChatProvider>,
    ledger: Mutex<BTreeMap<String, UsageEntry>>,
    limiter: Limiter,
    max_retries: u32,
    base_backoff: Duration,
}

impl Backend {
    pub fn new(provider: Box<dyn ChatProvider>, max_in_flight: usize) -> Self {
        Self {
            provider,
            ledger: Mutex::new(BTreeMap::new()),
            limiter: Limiter::new(max_in_flight),
            max_retries: 3,
            base_backoff: Duration::from_secs(1),
        }
    }

    /// Shrink the backoff base; tests use milliseconds.
    pub fn with_base_backoff(mut self, base: Duration) -> Self {
        self.base_backoff = base;
        self
    }

    /// Complete a request with up to three retries (exponential backoff) on
    /// transient failures. Usage lands in the ledger exactly once per
    /// logical call.
    pub fn complete(&self, request: &ChatRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let _permit = self.limiter.acquire();
        let mut retries: u32 = 0;
        loop {
            match self.provider.complete_once(request) {
                Ok(result) => {
                    let mut ledger = self.ledger.lock().unwrap();
                    let entry = ledger.entry(request.model_id.clone()).or_default();
                    entry.calls += 1;
                    entry.prompt_tokens += result.prompt_tokens;
                    entry.completion_tokens += result.completion_tokens;
                    entry.retries += retries as u64;
                    return Ok(result);
                }
                Err(err) if err.is_retryable() && retries < self.max_retries => {
                    retries += 1;
                    std::thread::sleep(self.base_backoff * 2u32.pow(retries - 1));
                }
                Err(err) => {
                    let mut ledger = self.ledger.lock().unwrap();
                    let entry = ledger.entry(request.model_id.clone()).or_default();
                    entry.failed_calls += 1;
                    entry.retries += retries as u64;
                    if retries > 0 {
                        return Err(BackendError::Exhausted {
                            attempts: retries + 1,
                            last: err.to_string(),
                        });
                    }
                    return Err(err);
                }
            }
        }
    }

    /// Snapshot of per-model usage.
    pub fn ledger(&self) -> BTreeMap<String, UsageEntry> {
        self.ledger.lock().unwrap().clone()
    }
}

// ---------------------------------------------------------------------------
// scripted mock
// ---------------------------------------------------------------------------

/// One script rule. The haystack a rule matches against is the model id plus
/// every message content, newline-joined; an empty `match` is the required
/// fallthrough. `consume: true` deactivates the rule after its first hit,
/// which is how sequences (flaky calls, per-round gate patterns) are
/// scripted. `error` simulates a failure instead of returning text: one of
/// `rate_limit`, `timeout`, `server`, `auth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub consume: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MockCall {
    pub model_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub struct MockProvider {
    rules: Mutex<Vec<(MockRule, bool)>>,
    successes: Mutex<Vec<MockCall>>,
    attempts: AtomicUsize,
}

impl MockProvider {
    pub fn new(rules: Vec<MockRule>) -> Result<Self, BackendError> {
        let has_fallthrough = rules
            .iter()
            .any(|r| r.pattern.is_empty() && r.response.is_some() && !r.consume);
        if !has_fallthrough {
            return Err(BackendError::Config(
                "mock script needs a persistent fallthrough rule with an empty match".into(),
            ));
        }
        for rule in &rules {
            if rule.response.is_none() && rule.error.is_none() {
                return Err(BackendError::Config(
                    "mock rule needs either a response or an error".into(),
                ));
            }
        }
        Ok(Self {
            rules: Mutex::new(rules.into_iter().map(|r| (r, false)).collect()),
            successes: Mutex::new(Vec::new()),
            attempts: AtomicUsize::new(0),
        })
    }

    pub fn from_script_path(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::Config(format!("cannot open mock script: {e}")))?;
        let mut rules = Vec::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rule: MockRule = serde_json::from_str(&line).map_err(|e| {
                BackendError::Config(format!("mock script line {}: {e}", lineno + 1))
            })?;
            rules.push(rule);
        }
        Self::new(rules)
    }

    /// Successful calls in order, for replay cross-checks.
    pub fn call_log(&self) -> Vec<MockCall> {
        self.successes.lock().unwrap().clone()
    }

    /// Total attempts including simulated failures.
    pub fn attempt_count(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl ChatProvider for MockProvider {
    fn complete_once(&self, request: &ChatRequest) -> Result<CompletionResult, BackendError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let haystack = std::iter::once(request.model_id.as_str())
            .chain(request.messages.iter().map(|m| m.content.as_str()))
            .collect::<Vec<_>>()
            .join("\n");
        let mut rules = self.rules.lock().unwrap();
        let hit = rules
            .iter_mut()
            .find(|(rule, used)| !(rule.consume && *used) && haystack.contains(&rule.pattern));
        let Some((rule, used)) = hit else {
            return Err(BackendError::Malformed(
                "no mock rule matched and no fallthrough fired".into(),
            ));
        };
        *used = true;
        if let Some(error) = &rule.error {
            return Err(match error.as_str() {
                "rate_limit" => BackendError::RateLimit("scripted 429".into()),
                "timeout" => BackendError::Timeout("scripted timeout".into()),
                "server" => BackendError::Transient("scripted 5xx".into()),
                "auth" => BackendError::Auth("scripted 401".into()),
                other => BackendError::Malformed(format!("scripted error {other}")),
            });
        }
        let text = rule.response.clone().unwrap_or_default();
        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| estimate_tokens(&m.content))
            .sum();
        let result = CompletionResult {
            completion_tokens: estimate_tokens(&text),
            prompt_tokens,
            text,
            latency_ms: 0,
        };
        self.successes.lock().unwrap().push(MockCall {
            model_id: request.model_id.clone(),
            prompt_tokens: result.prompt_tokens,
            completion_tokens: result.completion_tokens,
        });
        Ok(result)
    }
}

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP client
// ---------------------------------------------------------------------------

pub struct HttpProvider {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        if endpoint.is_empty() {
            return Err(BackendError::Config("endpoint is empty".into()));
        }
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            url,
            api_key,
            client,
        })
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

impl ChatProvider for HttpProvider {
    fn complete_once(&self, request: &ChatRequest) -> Result<CompletionResult, BackendError> {
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                    },
                    content: &m.content,
                })
                .collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let response = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(e.to_string())
            } else {
                BackendError::Transient(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            let detail = format!("{status}: {}", text.chars().take(200).collect::<String>());
            return Err(match status.as_u16() {
                401 | 403 => BackendError::Auth(detail),
                429 => BackendError::RateLimit(detail),
                408 => BackendError::Timeout(detail),
                s if s >= 500 => BackendError::Transient(detail),
                _ => BackendError::Malformed(detail),
            });
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        let parsed: WireResponse = response
            .json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
        let usage = parsed.usage.unwrap_or_default();
        let prompt_tokens = if usage.prompt_tokens > 0 {
            usage.prompt_tokens
        } else {
            request
                .messages
                .iter()
                .map(|m| estimate_tokens(&m.content))
                .sum()
        };
        let completion_tokens = if usage.completion_tokens > 0 {
            usage.completion_tokens
        } else {
            estimate_tokens(&choice.message.content)
        };
        Ok(CompletionResult {
            text: choice.message.content,
            prompt_tokens,
            completion_tokens,
            latency_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(pattern: &str, response: &str) -> MockRule {
        MockRule {
            pattern: pattern.into(),
            response: Some(response.into()),
            error: None,
            consume: false,
        }
    }

    fn user(content: &str) -> ChatRequest {
        ChatRequest::new(
            "mock-model",
            vec![ChatMessage {
                role: Role::User,
                content: content.into(),
            }],
        )
    }

    fn mock_backend(rules: Vec<MockRule>) -> (Backend, &'static MockProvider) {
        let provider: &'static MockProvider =
            Box::leak(Box::new(MockProvider::new(rules).unwrap()));
        let backend = Backend::new(Box::new(ProviderRef(provider)), 4)
            .with_base_backoff(Duration::from_millis(1));
        (backend, provider)
    }

    struct ProviderRef(&'static MockProvider);
    impl ChatProvider for ProviderRef {
        fn complete_once(&self, request: &ChatRequest) -> Result<CompletionResult, BackendError> {
            self.0.complete_once(request)
        }
    }

    #[test]
    fn scripted_echo() {
        let (backend, _) = mock_backend(vec![rule("hello", "world"), rule("", "fallback")]);
        let result = backend.complete(&user("say hello")).unwrap();
        assert_eq!(result.text, "world");
        let other = backend.complete(&user("anything else")).unwrap();
        assert_eq!(other.text, "fallback");
    }

    #[test]
    fn script_requires_fallthrough() {
        assert!(MockProvider::new(vec![rule("x", "y")]).is_err());
        assert!(MockProvider::new(vec![]).is_err());
    }

    #[test]
    fn rate_limits_retry_then_succeed() {
        let flaky = MockRule {
            pattern: "q".into(),
            response: None,
            error: Some("rate_limit".into()),
            consume: true,
        };
        let rules = vec![flaky.clone(), flaky.clone(), flaky, rule("", "ok")];
        let (backend, provider) = mock_backend(rules);
        let result = backend.complete(&user("q")).unwrap();
        assert_eq!(result.text, "ok");
        assert_eq!(provider.attempt_count(), 4);
        let ledger = backend.ledger();
        let entry = &ledger["mock-model"];
        assert_eq!(entry.retries, 3);
        assert_eq!(entry.calls, 1);
        assert_eq!(entry.failed_calls, 0);
    }

    #[test]
    fn auth_errors_do_not_retry() {
        let rules = vec![
            MockRule {
                pattern: "q".into(),
                response: None,
                error: Some("auth".into()),
                consume: false,
            },
            rule("", "ok"),
        ];
        let (backend, provider) = mock_backend(rules);
        let err = backend.complete(&user("q")).unwrap_err();
        assert!(matches!(err, BackendError::Auth(_)));
        assert_eq!(provider.attempt_count(), 1);
        assert_eq!(backend.ledger()["mock-model"].failed_calls, 1);
    }

    #[test]
    fn exhausted_after_max_retries() {
        let rules = vec![
            MockRule {
                pattern: "q".into(),
                response: None,
                error: Some("server".into()),
                consume: false,
            },
            rule("", "ok"),
        ];
        let (backend, provider) = mock_backend(rules);
        let err = backend.complete(&user("q")).unwrap_err();
        assert!(matches!(err, BackendError::Exhausted { attempts: 4, .. }));
        assert_eq!(provider.attempt_count(), 4);
    }

    #[test]
    fn ledger_starts_empty_and_adds_up() {
        let (backend, _) = mock_backend(vec![rule("", "two words")]);
        assert!(backend.ledger().is_empty());
        backend.complete(&user("one two three")).unwrap();
        backend.complete(&user("four five")).unwrap();
        let entry = &backend.ledger()["mock-model"];
        assert_eq!(entry.calls, 2);
        assert_eq!(entry.prompt_tokens, 5);
        assert_eq!(entry.completion_tokens, 4);
    }

    #[test]
    fn ledger_matches_replayed_call_log() {
        let (backend, provider) = mock_backend(vec![rule("", "reply with some words here")]);
        for i in 0..20 {
            let words = "w ".repeat(i + 1);
            backend.complete(&user(&words)).unwrap();
        }
        let log = provider.call_log();
        assert_eq!(log.len(), 20);
        let prompt_sum: u64 = log.iter().map(|c| c.prompt_tokens).sum();
        let completion_sum: u64 = log.iter().map(|c| c.completion_tokens).sum();
        let entry = &backend.ledger()["mock-model"];
        assert_eq!(entry.prompt_tokens, prompt_sum);
        assert_eq!(entry.completion_tokens, completion_sum);
    }

    #[test]
    fn request_validation() {
        let (backend, _) = mock_backend(vec![rule("", "ok")]);
        let no_user = ChatRequest::new(
            "m",
            vec![ChatMessage {
                role: Role::System,
                content: "sys".into(),
            }],
        );
        assert!(matches!(
            backend.complete(&no_user),
            Err(BackendError::Validation(_))
        ));
        let mut misplaced = user("hi");
        misplaced.messages.push(ChatMessage {
            role: Role::System,
            content: "late system".into(),
        });
        assert!(matches!(
            backend.complete(&misplaced),
            Err(BackendError::Validation(_))
        ));
    }

    #[test]
    fn consume_rules_enable_sequences() {
        let rules = vec![
            MockRule {
                pattern: "q".into(),
                response: Some("first".into()),
                error: None,
                consume: true,
            },
            MockRule {
                pattern: "q".into(),
                response: Some("second".into()),
                error: None,
                consume: true,
            },
            rule("", "rest"),
        ];
        let (backend, _) = mock_backend(rules);
        assert_eq!(backend.complete(&user("q")).unwrap().text, "first");
        assert_eq!(backend.complete(&user("q")).unwrap().text, "second");
        assert_eq!(backend.complete(&user("q")).unwrap().text, "rest");
    }
}
