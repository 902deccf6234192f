//! Chat-completion backends and token accounting.
//!
//! Every backend implements [`ChatBackend`]. The live [`HttpBackend`] speaks the common
//! `/chat/completions` JSON protocol; [`ScriptedBackend`] replays a transcript keyed by
//! `(tag, persona_id, turn)` so the workflow can run offline and reproducibly.

mod http;
mod retry;
mod scripted;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use retry::{is_retryable_status, run_with_retry, RetryPolicy, Sleeper, ThreadSleeper};
pub use scripted::{ScriptedBackend, TranscriptEntry};

pub const ENV_API_BASE: &str = "COPB_API_BASE";
pub const ENV_API_KEY: &str = "COPB_API_KEY";
pub const ENV_MODEL: &str = "COPB_MODEL";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("no transcript entry for step {tag:?} (persona {persona_id:?}, turn {turn})")]
    MissingTranscript { tag: String, persona_id: String, turn: u32 },
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionParams {
    #[serde(default)]
    pub model: String,
    /// `None` leaves the provider default in place.
    #[serde(default = "default_temperature")]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

fn default_temperature() -> Option<f64> {
    Some(1.0)
}

fn default_max_tokens() -> u32 {
    512
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            model: String::new(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            stop: None,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(LlmError::Precondition(format!("temperature {t} outside [0, 2]")));
            }
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self { prompt_tokens, completion_tokens }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

pub fn aggregate_usage(usages: &[TokenUsage]) -> TokenUsage {
    usages.iter().copied().sum()
}

/// Average tokens spent per physical trajectory when each sequence is grounded several times.
pub fn tokens_per_trajectory(
    total: TokenUsage,
    n_sequences: u64,
    trajectories_per_sequence: u64,
) -> Result<f64, LlmError> {
    if n_sequences == 0 || trajectories_per_sequence == 0 {
        return Err(LlmError::Precondition("sequence and trajectory counts must be at least 1".into()));
    }
    Ok(total.total() as f64 / (n_sequences as f64 * trajectories_per_sequence as f64))
}

/// Rough token count for text when an endpoint reports none: one token per four characters.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub fn estimate_usage(messages: &[ChatMessage], reply: &str) -> TokenUsage {
    TokenUsage {
        prompt_tokens: messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
        completion_tokens: estimate_tokens(reply),
    }
}

/// Identifies a workflow step for transcript lookup. Live backends ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepKey<'a> {
    pub tag: &'a str,
    pub persona_id: &'a str,
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
    /// Set when `usage` was estimated locally rather than reported by the backend.
    pub estimated: bool,
}

pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        (**self).complete(messages, params, key)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        (**self).complete(messages, params, key)
    }
}

/// Checks the shape every backend requires: non-empty, ending in a user turn, no empty
/// user or assistant content.
pub fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let last = messages.last().ok_or_else(|| LlmError::Precondition("message list is empty".into()))?;
    if last.role != Role::User {
        return Err(LlmError::Precondition("last message must come from the user".into()));
    }
    if let Some(i) = messages.iter().position(|m| m.role != Role::System && m.content.trim().is_empty()) {
        return Err(LlmError::Precondition(format!("message {i} has empty content")));
    }
    Ok(())
}

/// A backend driven by a closure; handy for policy-style test doubles.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&[ChatMessage], &StepKey<'_>) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(
        &self,
        messages: &[ChatMessage],
        _params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        check_messages(messages)?;
        let text = (self.0)(messages, key)?;
        let usage = estimate_usage(messages, &text);
        Ok(Completion { text, usage, estimated: true })
    }
}

/// Wraps a backend and accumulates usage over every successful call.
pub struct Metered<B> {
    inner: B,
    prompt: AtomicU64,
    completion: AtomicU64,
    calls: AtomicU64,
}

impl<B> Metered<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, prompt: AtomicU64::new(0), completion: AtomicU64::new(0), calls: AtomicU64::new(0) }
    }

    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt.load(Ordering::SeqCst),
            completion_tokens: self.completion.load(Ordering::SeqCst),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: ChatBackend> ChatBackend for Metered<B> {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        let out = self.inner.complete(messages, params, key)?;
        self.prompt.fetch_add(out.usage.prompt_tokens, Ordering::SeqCst);
        self.completion.fetch_add(out.usage.completion_tokens, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }
}

/// Bounds the number of concurrent requests to the wrapped backend.
pub struct Limited<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B> Limited<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self { inner, limit: limit.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }
}

struct Permit<'a, B>(&'a Limited<B>);

impl<B> Drop for Permit<'_, B> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl<B: ChatBackend> ChatBackend for Limited<B> {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
        key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        let _permit = {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
            Permit(self)
        };
        self.inner.complete(messages, params, key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub transcript_path: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_temperature")]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    120_000
}

impl BackendConfig {
    pub fn scripted(transcript_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            base_url: None,
            api_key: None,
            model: None,
            transcript_path: Some(transcript_path.into()),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            timeout_ms: default_timeout_ms(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
        }
    }

    /// Fills missing HTTP fields from `COPB_API_BASE`, `COPB_API_KEY` and `COPB_MODEL`.
    pub fn with_env(mut self) -> Self {
        let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if self.base_url.is_none() {
            self.base_url = env(ENV_API_BASE);
        }
        if self.api_key.is_none() {
            self.api_key = env(ENV_API_KEY);
        }
        if self.model.is_none() {
            self.model = env(ENV_MODEL);
        }
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        self.retry.validate()?;
        match self.kind {
            BackendKind::Http => {
                if self.base_url.is_none() {
                    return Err(LlmError::Config(format!("http backend needs base_url (or {ENV_API_BASE})")));
                }
                if self.model.is_none() {
                    return Err(LlmError::Config(format!("http backend needs model (or {ENV_MODEL})")));
                }
            }
            BackendKind::Scripted => {
                if self.transcript_path.is_none() {
                    return Err(LlmError::Config("scripted backend needs transcript_path".into()));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> CompletionParams {
        CompletionParams {
            model: self.model.clone().unwrap_or_default(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            stop: None,
        }
    }

    /// Builds the configured backend; relative transcript paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Arc<dyn ChatBackend>, LlmError> {
        self.validate()?;
        let backend: Arc<dyn ChatBackend> = match self.kind {
            BackendKind::Http => Arc::new(Limited::new(
                HttpBackend::new(
                    self.base_url.clone().unwrap_or_default(),
                    self.api_key.clone(),
                    self.retry.clone(),
                    std::time::Duration::from_millis(self.timeout_ms),
                ),
                self.max_in_flight,
            )),
            BackendKind::Scripted => {
                let path = self.transcript_path.as_ref().expect("validated");
                let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                Arc::new(ScriptedBackend::from_file(&path)?)
            }
        };
        Ok(backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn usage_aggregation() {
        assert_eq!(
            aggregate_usage(&[TokenUsage::new(100, 50), TokenUsage::new(30, 20)]),
            TokenUsage::new(130, 70)
        );
        assert_eq!(aggregate_usage(&[]), TokenUsage::new(0, 0));
        let many = vec![TokenUsage::new(10, 1); 1000];
        let mut oracle = (0u64, 0u64);
        for u in &many {
            oracle.0 += u.prompt_tokens;
            oracle.1 += u.completion_tokens;
        }
        assert_eq!(aggregate_usage(&many), TokenUsage::new(oracle.0, oracle.1));
        assert_eq!(oracle, (10_000, 1_000));
    }

    #[test]
    fn per_trajectory_tokens() {
        assert_eq!(tokens_per_trajectory(TokenUsage::new(4000, 1000), 1, 20).unwrap(), 250.0);
        assert_eq!(tokens_per_trajectory(TokenUsage::new(4000, 1000), 1, 1).unwrap(), 5000.0);
        assert_eq!(tokens_per_trajectory(TokenUsage::default(), 3, 20).unwrap(), 0.0);
        assert!(tokens_per_trajectory(TokenUsage::new(1, 1), 0, 20).is_err());
        assert!(tokens_per_trajectory(TokenUsage::new(1, 1), 1, 0).is_err());
    }

    #[test]
    fn message_preconditions() {
        assert!(matches!(check_messages(&[]), Err(LlmError::Precondition(_))));
        assert!(check_messages(&[ChatMessage::system("s"), ChatMessage::user("u")]).is_ok());
        assert!(check_messages(&[ChatMessage::user("u"), ChatMessage::assistant("a")]).is_err());
        assert!(check_messages(&[ChatMessage::user("  ")]).is_err());
    }

    #[test]
    fn estimation_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }

    #[test]
    fn temperature_bounds() {
        let mut p = CompletionParams::default();
        assert!(p.validate().is_ok());
        p.temperature = Some(2.5);
        assert!(p.validate().is_err());
        p.temperature = None;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn metered_and_limited_count_calls() {
        let backend = Metered::new(Limited::new(
            FnBackend(|_m: &[ChatMessage], _k: &StepKey<'_>| Ok("abcdefgh".to_string())),
            2,
        ));
        let key = StepKey { tag: "t", persona_id: "p", turn: 0 };
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    backend
                        .complete(&[ChatMessage::user("abcd")], &CompletionParams::default(), &key)
                        .unwrap();
                });
            }
        });
        assert_eq!(backend.calls(), 8);
        assert_eq!(backend.usage(), TokenUsage::new(8, 16));
    }

    #[test]
    fn config_kind_fields() {
        let cfg: BackendConfig = serde_json::from_str(r#"{"kind":"scripted"}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: BackendConfig =
            serde_json::from_str(r#"{"kind":"http","base_url":"http://x","model":"m"}"#).unwrap();
        assert!(cfg.validate().is_ok());
        assert!(serde_json::from_str::<BackendConfig>(r#"{"kind":"http","bogus":1}"#).is_err());
    }

    fn usage() -> impl Strategy<Value = TokenUsage> {
        (0u64..1_000_000, 0u64..1_000_000).prop_map(|(a, b)| TokenUsage::new(a, b))
    }

    proptest! {
        #[test]
        fn aggregation_is_order_free(mut v in prop::collection::vec(usage(), 0..20), split in 0usize..20) {
            let whole = aggregate_usage(&v);
            let k = split.min(v.len());
            let (a, b) = v.split_at(k);
            prop_assert_eq!(aggregate_usage(&[aggregate_usage(a), aggregate_usage(b)]), whole);
            v.reverse();
            prop_assert_eq!(aggregate_usage(&v), whole);
        }
    }
}
