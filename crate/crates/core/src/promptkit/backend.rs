//! Completion backends: a scripted one for tests and an optional HTTP one.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("scripted backend has no replies left")]
    Exhausted,
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

/// Turns a prompt into reply text. One call at a time per episode.
pub trait CompletionBackend: Send {
    fn complete(&mut self, prompt: &str, stop: &[&str]) -> Result<String, BackendError>;
}

/// Replays canned replies in order and keeps every prompt it was sent.
#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    replies: VecDeque<String>,
    prompts: Vec<String>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { replies: replies.into_iter().map(Into::into).collect(), prompts: Vec::new() }
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&mut self, prompt: &str, _stop: &[&str]) -> Result<String, BackendError> {
        self.prompts.push(prompt.to_string());
        self.replies.pop_front().ok_or(BackendError::Exhausted)
    }
}

#[cfg(feature = "http-backend")]
mod http {
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::{BackendError, CompletionBackend};

    pub const ENV_ENDPOINT: &str = "TABLETOP_LLM_ENDPOINT";
    pub const ENV_MODEL: &str = "TABLETOP_LLM_MODEL";
    pub const ENV_API_KEY: &str = "TABLETOP_LLM_API_KEY";
    pub const ENV_TIMEOUT: &str = "TABLETOP_LLM_TIMEOUT_SECS";

    #[derive(Clone, Debug, PartialEq, Eq)]
    pub struct HttpConfig {
        /// Chat-completions URL.
        pub endpoint: String,
        pub model: String,
        pub api_key: Option<String>,
        pub timeout: Duration,
    }

    impl HttpConfig {
        pub fn from_env() -> Result<Self, BackendError> {
            let need = |k: &str| std::env::var(k).map_err(|_| BackendError::Config(format!("{k} is not set")));
            let timeout = match std::env::var(ENV_TIMEOUT) {
                Ok(v) => v.parse::<u64>().map_err(|_| BackendError::Config(format!("{ENV_TIMEOUT}={v} is not a number")))?,
                Err(_) => 60,
            };
            Ok(Self {
                endpoint: need(ENV_ENDPOINT)?,
                model: need(ENV_MODEL)?,
                api_key: std::env::var(ENV_API_KEY).ok(),
                timeout: Duration::from_secs(timeout),
            })
        }
    }

    /// Posts the prompt as a single user message to a chat-completions
    /// style endpoint and returns the first choice's text.
    pub struct HttpBackend {
        config: HttpConfig,
        client: reqwest::blocking::Client,
    }

    impl HttpBackend {
        pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(config.timeout)
                .build()
                .map_err(|e| BackendError::Config(e.to_string()))?;
            Ok(Self { config, client })
        }

        pub fn from_env() -> Result<Self, BackendError> {
            Self::new(HttpConfig::from_env()?)
        }
    }

    impl CompletionBackend for HttpBackend {
        fn complete(&mut self, prompt: &str, stop: &[&str]) -> Result<String, BackendError> {
            let body = json!({
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "stop": stop,
                "temperature": 0,
            });
            let mut req = self.client.post(&self.config.endpoint).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
            let status = resp.status();
            if !status.is_success() {
                return Err(BackendError::BadResponse(format!("status {status}")));
            }
            let v: Value = resp.json().map_err(|e| BackendError::BadResponse(e.to_string()))?;
            v.pointer("/choices/0/message/content")
                .or_else(|| v.pointer("/choices/0/text"))
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| BackendError::BadResponse("no completion text".into()))
        }
    }
}

#[cfg(feature = "http-backend")]
pub use http::{HttpBackend, HttpConfig};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order_then_runs_dry() {
        let mut b = ScriptedBackend::new(["a", "b"]);
        assert_eq!(b.complete("p1", &[]).unwrap(), "a");
        assert_eq!(b.complete("p2", &[]).unwrap(), "b");
        assert_eq!(b.complete("p3", &[]), Err(BackendError::Exhausted));
        assert_eq!(b.prompts(), ["p1", "p2", "p3"]);
    }
}
