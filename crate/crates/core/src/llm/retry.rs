use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub backoff_initial_ms: u64,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, backoff_initial_ms: 500, backoff_factor: 2.0 }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_attempts == 0 {
            return Err(LlmError::Config("retry.max_attempts must be at least 1".into()));
        }
        if !(self.backoff_factor >= 1.0) {
            return Err(LlmError::Config("retry.backoff_factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.backoff_initial_ms as f64 * self.backoff_factor.powi(retry as i32 - 1);
        Duration::from_millis(ms.min(600_000.0) as u64)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// 429 and the usual gateway/overload statuses are worth retrying; other statuses are final.
pub fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

pub enum AttemptError {
    Transient(String),
    Fatal(LlmError),
}

/// Runs `op` until it succeeds, fails fatally, or the attempt budget is spent.
pub fn run_with_retry<T>(
    policy: &RetryPolicy,
    sleeper: &dyn Sleeper,
    mut op: impl FnMut(u32) -> Result<T, AttemptError>,
) -> Result<T, LlmError> {
    let mut attempt = 1;
    loop {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(AttemptError::Fatal(e)) => return Err(e),
            Err(AttemptError::Transient(message)) => {
                if attempt >= policy.max_attempts {
                    return Err(LlmError::Transport { attempts: attempt, message });
                }
                log::debug!("transient failure on attempt {attempt}: {message}");
                sleeper.sleep(policy.delay(attempt));
                attempt += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[derive(Default)]
    struct Recorder(Mutex<Vec<Duration>>);

    impl Sleeper for Recorder {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    #[test]
    fn never_exceeds_budget_and_backoff_grows() {
        let policy = RetryPolicy { max_attempts: 5, backoff_initial_ms: 10, backoff_factor: 1.5 };
        let rec = Recorder::default();
        let mut calls = 0;
        let out: Result<(), _> = run_with_retry(&policy, &rec, |_| {
            calls += 1;
            Err(AttemptError::Transient("down".into()))
        });
        assert_eq!(calls, 5);
        assert!(matches!(out, Err(LlmError::Transport { attempts: 5, .. })));
        let delays = rec.0.lock().unwrap().clone();
        assert_eq!(delays.len(), 4);
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(delays[0], Duration::from_millis(10));
    }

    #[test]
    fn fatal_stops_immediately() {
        let rec = Recorder::default();
        let mut calls = 0;
        let out: Result<(), _> = run_with_retry(&RetryPolicy::default(), &rec, |_| {
            calls += 1;
            Err(AttemptError::Fatal(LlmError::Status { status: 401, body: String::new() }))
        });
        assert_eq!(calls, 1);
        assert!(out.is_err());
    }

    #[test]
    fn policy_validation() {
        let mut p = RetryPolicy { backoff_factor: 0.5, ..RetryPolicy::default() };
        assert!(p.validate().is_err());
        p.backoff_factor = 1.0;
        p.max_attempts = 0;
        assert!(p.validate().is_err());
    }
}
