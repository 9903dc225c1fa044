//! Translation backends behind one contract, with an optional persistent
//! cache and a bounded-parallel batch driver.

mod cache;
mod mock;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, TranslationCache};
pub use mock::{
    CountingBackend, FaultBackend, FaultEvent, FaultKind, FaultProfile, IdentityBackend, PseudoBackend, ReverseBackend,
    ScriptedBackend, PSEUDO_SUFFIX,
};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy, ENV_MT_TOKEN, ENV_MT_URL};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum TranslateError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend returned an empty translation")]
    EmptyTranslation,
    #[error("backend error: {0}")]
    Backend(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl TranslateError {
    /// Whether the error came from the network layer (transport or HTTP status).
    pub fn is_network(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::Status { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub src: String,
    pub tgt: String,
}

impl TranslationRequest {
    pub fn new(text: impl Into<String>, src: impl Into<String>, tgt: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            src: src.into(),
            tgt: tgt.into(),
        }
    }

    pub fn validate(&self) -> Result<(), TranslateError> {
        if self.text.trim().is_empty() {
            return Err(TranslateError::InvalidRequest("empty text".into()));
        }
        if self.src == self.tgt {
            return Err(TranslateError::InvalidRequest(format!(
                "source and target are both {:?}",
                self.src
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub text: String,
    pub backend_id: String,
    pub cached: bool,
}

/// A machine translation system. Implementations must be callable from
/// several threads at once.
pub trait TranslationBackend: Send + Sync {
    fn id(&self) -> &str;

    fn translate_text(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError>;
}

impl<B: TranslationBackend + ?Sized> TranslationBackend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn translate_text(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError> {
        (**self).translate_text(text, src, tgt)
    }
}

/// A backend plus an optional cache keyed by `(backend_id, src, tgt, text)`.
pub struct Translator {
    backend: Arc<dyn TranslationBackend>,
    cache: Option<Arc<TranslationCache>>,
    backend_calls: AtomicUsize,
}

impl Translator {
    pub fn new(backend: Arc<dyn TranslationBackend>) -> Self {
        Self {
            backend,
            cache: None,
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Arc<TranslationCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Number of requests that reached the backend (cache misses).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn translate(&self, req: &TranslationRequest) -> Result<TranslationResult, TranslateError> {
        req.validate()?;
        let backend_id = self.backend.id();
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.lookup(backend_id, &req.src, &req.tgt, &req.text) {
                return Ok(TranslationResult {
                    text,
                    backend_id: backend_id.to_string(),
                    cached: true,
                });
            }
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.backend.translate_text(&req.text, &req.src, &req.tgt)?;
        if text.trim().is_empty() {
            return Err(TranslateError::EmptyTranslation);
        }
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.store(backend_id, &req.src, &req.tgt, &req.text, &text) {
                log::warn!("translation cache write failed: {e}");
            }
        }
        Ok(TranslationResult {
            text,
            backend_id: backend_id.to_string(),
            cached: false,
        })
    }

    /// Translates every request with at most `max_in_flight` outstanding at
    /// once. Results line up with `reqs`; each failure stays in its slot.
    pub fn translate_batch(
        &self,
        reqs: &[TranslationRequest],
        max_in_flight: usize,
    ) -> Result<Vec<Result<TranslationResult, TranslateError>>, TranslateError> {
        if max_in_flight == 0 {
            return Err(TranslateError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(crate::par::bounded_map(reqs, max_in_flight, |r| self.translate(r)))
    }
}
