use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::retry::AttemptError;
use super::{
    check_messages, estimate_usage, is_retryable_status, run_with_retry, ChatBackend, ChatMessage,
    Completion, CompletionParams, LlmError, RetryPolicy, Sleeper, StepKey, ThreadSleeper, TokenUsage,
};

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

#[derive(Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: MessageBody,
}

#[derive(Deserialize)]
struct MessageBody {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

impl HttpBackend {
    pub fn new(
        base_url: impl AsRef<str>,
        api_key: Option<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            endpoint: format!("{}/chat/completions", base_url.as_ref().trim_end_matches('/')),
            api_key,
            retry,
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    fn request_body(messages: &[ChatMessage], params: &CompletionParams) -> String {
        let mut body = json!({
            "model": params.model,
            "messages": messages,
            "max_tokens": params.max_tokens,
        });
        if let Some(t) = params.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(stop) = &params.stop {
            body["stop"] = json!(stop);
        }
        body.to_string()
    }

    fn attempt(&self, body: &str) -> Result<(u16, String), AttemptError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| AttemptError::Transient(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok((status, text))
        } else if is_retryable_status(status) {
            Err(AttemptError::Transient(format!("HTTP {status}")))
        } else {
            Err(AttemptError::Fatal(LlmError::Status { status, body: text }))
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
        _key: &StepKey<'_>,
    ) -> Result<Completion, LlmError> {
        check_messages(messages)?;
        params.validate()?;
        let body = Self::request_body(messages, params);
        let (_, text) = run_with_retry(&self.retry, self.sleeper.as_ref(), |_| self.attempt(&body))?;
        let parsed: ResponseBody =
            serde_json::from_str(&text).map_err(|e| LlmError::Protocol(e.to_string()))?;
        let reply = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Protocol("response has no choices[0].message.content".into()))?;
        let reported =
            parsed.usage.and_then(|u| Some(TokenUsage::new(u.prompt_tokens?, u.completion_tokens?)));
        let (usage, estimated) = match reported {
            Some(u) => (u, false),
            None => (estimate_usage(messages, &reply), true),
        };
        Ok(Completion { text: reply, usage, estimated })
    }
}
