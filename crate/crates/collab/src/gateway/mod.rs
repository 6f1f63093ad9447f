//! Uniform client layer for chat-completion and embedding services.
//!
//! Three backend families implement the same traits: a live HTTP backend
//! (OpenAI-compatible JSON endpoints) with transport retries and a
//! concurrent-request cap, deterministic scripted strategies used as offline
//! test oracles, and embedding providers (live, recorded-fixture replay, and
//! seeded synthetic vectors for scripted runs).

mod embedding;
mod live;
mod scripted;

pub use embedding::{FixtureEmbedder, ScriptedEmbedder};
pub use live::{LiveBackend, LiveConfig, RedactionLevel, RetryPolicy, Transport, TransportFault};
pub use scripted::{ScriptedBackend, ScriptedStrategy};

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the live-service credential by default.
pub const DEFAULT_API_KEY_ENV: &str = "COLLAB_LLM_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gateway configuration error: {0}")]
    Configuration(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("service rejected request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed service response: {0}")]
    MalformedResponse(String),
    #[error("no recorded embedding for text: {0:?}")]
    FixtureMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    Medium,
    High,
}

/// One chat-completion query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: Option<String>,
    pub user_text: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output: u32,
    pub reasoning_effort: Option<ReasoningEffort>,
}

impl ChatRequest {
    pub fn new(user_text: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            system_text: None,
            user_text: user_text.into(),
            model_id: model_id.into(),
            temperature: 1.0,
            max_output: 2048,
            reasoning_effort: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_text.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "user_text must be non-empty".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub latency: Duration,
}

pub type EmbeddingVector = Vec<f64>;

/// Embeddings for a batch of texts; one vector per text, uniform dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBatch {
    pub texts: Vec<String>,
    pub model_id: String,
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingBatch {
    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, GatewayError>;
}

/// Counting semaphore bounding concurrent live requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        SemaphoreGuard { sem: self }
    }
}

pub(crate) struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.sem.permits.lock().unwrap();
        *n += 1;
        self.sem.cv.notify_one();
    }
}

/// FNV-1a, used for fixture hashes in run-log headers and for seeding
/// synthetic embeddings from text.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
