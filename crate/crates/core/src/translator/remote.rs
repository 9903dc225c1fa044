//! JSON-over-HTTP client for a translation service.
//!
//! Wire contract: `POST <url>` with `{"text", "src", "tgt"}`, answered by
//! `{"text"}`. Any non-2xx status is an error.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{TranslateError, TranslationBackend};

pub const ENV_MT_URL: &str = "XPROJECT_MT_URL";
pub const ENV_MT_TOKEN: &str = "XPROJECT_MT_TOKEN";

const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Wait before each retry; its length is the retry count.
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_secs(1),
                Duration::from_secs(2),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full endpoint, e.g. `http://mt.internal:8080/translate`.
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `XPROJECT_MT_URL` and `XPROJECT_MT_TOKEN`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_MT_URL).ok().filter(|u| !u.is_empty())?;
        let mut cfg = Self::new(url);
        cfg.token = std::env::var(ENV_MT_TOKEN).ok().filter(|t| !t.is_empty());
        Some(cfg)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    text: &'a str,
    src: &'a str,
    tgt: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    id: String,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, TranslateError> {
        if !(config.url.starts_with("http://") || config.url.starts_with("https://")) {
            return Err(TranslateError::Config(format!("not an http(s) URL: {:?}", config.url)));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TranslateError::Config(e.to_string()))?;
        let id = format!("remote:{}", config.url);
        Ok(Self { config, client, id })
    }

    fn attempt(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError> {
        let mut request = self.client.post(&self.config.url).json(&WireRequest { text, src, tgt });
        if let Some(token) = &self.config.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| TranslateError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| TranslateError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(TranslateError::Status {
                status: status.as_u16(),
                body: body.chars().take(BODY_EXCERPT).collect(),
            });
        }
        let parsed: WireResponse = serde_json::from_str(&body).map_err(|e| {
            TranslateError::Backend(format!(
                "unexpected response body ({e}): {}",
                body.chars().take(BODY_EXCERPT).collect::<String>()
            ))
        })?;
        Ok(parsed.text)
    }
}

fn retryable(e: &TranslateError) -> bool {
    match e {
        TranslateError::Transport(_) => true,
        TranslateError::Status { status, .. } => *status >= 500,
        _ => false,
    }
}

impl TranslationBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_text(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError> {
        let mut waits = self.config.retry.backoff.iter();
        loop {
            match self.attempt(text, src, tgt) {
                Err(e) if retryable(&e) => match waits.next() {
                    Some(wait) => {
                        log::debug!("retrying after {wait:?}: {e}");
                        std::thread::sleep(*wait);
                    }
                    None => return Err(e),
                },
                other => return other,
            }
        }
    }
}
