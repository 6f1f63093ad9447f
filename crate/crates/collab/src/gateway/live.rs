//! Live HTTP backend for OpenAI-compatible chat-completion and embedding
//! endpoints.
//!
//! Transport faults (connection errors, timeouts, 429 and 5xx responses) are
//! retried with exponential backoff. This layer is distinct from the
//! agent-level format retry: a completion that parses badly is the agent's
//! problem, a socket that drops is ours.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    ChatBackend, ChatRequest, ChatResponse, EmbedBackend, EmbeddingBatch, GatewayError, Semaphore,
    Usage, DEFAULT_API_KEY_ENV,
};

/// A transport-level fault, always considered retryable.
#[derive(Debug, Clone)]
pub struct TransportFault(pub String);

/// Minimal HTTP surface the backend needs; tests substitute counting or
/// failure-injecting fakes.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<(u16, Value), TransportFault>;
}

/// Default transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<(u16, Value), TransportFault> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| TransportFault(e.to_string()))?;
        let status = resp.status().as_u16();
        let value = resp
            .body_mut()
            .read_json::<Value>()
            .unwrap_or_else(|e| json!({ "error": e.to_string() }));
        Ok((status, value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RedactionLevel {
    /// Log request metadata only (model, sizes, attempt counts).
    Redacted,
    /// Log full prompt text. Forced back to `Redacted` whenever a credential
    /// is present in the environment.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_backoff_ms: 1_000,
            max_backoff_ms: 32_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: usize) -> Duration {
        let ms = self
            .base_backoff_ms
            .saturating_mul(1u64 << attempt.min(16) as u32)
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub embedding_dimension: usize,
    pub concurrent_cap: usize,
    pub retry: RetryPolicy,
    pub redaction: RedactionLevel,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            chat_model: "gpt-4-0613".into(),
            embedding_model: "text-embedding-3-large".into(),
            embedding_dimension: 3072,
            concurrent_cap: 4,
            retry: RetryPolicy::default(),
            redaction: RedactionLevel::Redacted,
            timeout_secs: 120,
        }
    }
}

type LogSink = Box<dyn Fn(&str) + Send + Sync>;
type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct LiveBackend {
    config: LiveConfig,
    transport: Box<dyn Transport>,
    limiter: Semaphore,
    log: Option<LogSink>,
    sleep: Sleeper,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs));
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(config: LiveConfig, transport: Box<dyn Transport>) -> Self {
        let cap = config.concurrent_cap;
        Self {
            config,
            transport,
            limiter: Semaphore::new(cap),
            log: None,
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Install a log sink. Used by tests to check redaction behavior.
    pub fn with_log_sink(mut self, sink: LogSink) -> Self {
        self.log = Some(sink);
        self
    }

    /// Replace the backoff sleeper (tests use a no-op).
    pub fn with_sleeper(mut self, sleep: Sleeper) -> Self {
        self.sleep = sleep;
        self
    }

    fn credential(&self) -> Result<String, GatewayError> {
        std::env::var(&self.config.api_key_env).map_err(|_| {
            GatewayError::Configuration(format!(
                "credential environment variable {} is not set",
                self.config.api_key_env
            ))
        })
    }

    fn log_request(&self, kind: &str, detail: &str, prompt: &str) {
        let Some(sink) = &self.log else { return };
        let credential_present = std::env::var(&self.config.api_key_env).is_ok();
        let effective = if credential_present {
            RedactionLevel::Redacted
        } else {
            self.config.redaction
        };
        match effective {
            RedactionLevel::Redacted => {
                sink(&format!("{kind}: {detail} ({} prompt bytes)", prompt.len()))
            }
            RedactionLevel::Full => sink(&format!("{kind}: {detail}\n{prompt}")),
        }
    }

    fn post_with_retries(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        let key = self.credential()?;
        let headers = vec![
            ("Authorization".to_string(), format!("Bearer {key}")),
            ("Content-Type".to_string(), "application/json".to_string()),
        ];
        let mut last_fault = String::new();
        for attempt in 0..self.config.retry.max_attempts {
            if attempt > 0 {
                (self.sleep)(self.config.retry.backoff(attempt - 1));
            }
            let _permit = self.limiter.acquire();
            match self.transport.post_json(url, &headers, body) {
                Ok((status, value)) if (200..300).contains(&status) => return Ok(value),
                Ok((status, value)) if status == 429 || status >= 500 => {
                    last_fault = format!("HTTP {status}: {value}");
                }
                Ok((status, value)) => {
                    return Err(GatewayError::Rejected {
                        status,
                        message: value.to_string(),
                    })
                }
                Err(TransportFault(msg)) => last_fault = msg,
            }
        }
        Err(GatewayError::Transport {
            attempts: self.config.retry.max_attempts,
            message: last_fault,
        })
    }
}

impl ChatBackend for LiveBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let mut messages = Vec::new();
        if let Some(system) = &request.system_text {
            messages.push(json!({ "role": "system", "content": system }));
        }
        messages.push(json!({ "role": "user", "content": request.user_text }));
        let mut body = json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        });
        if let Some(effort) = request.reasoning_effort {
            body["reasoning_effort"] = serde_json::to_value(effort).unwrap();
        }
        self.log_request("chat", &request.model_id, &request.user_text);
        let started = Instant::now();
        let url = format!("{}/chat/completions", self.config.base_url);
        let value = self.post_with_retries(&url, &body)?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::MalformedResponse("missing completion text".into()))?
            .to_string();
        let usage = Usage {
            prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(ChatResponse {
            text,
            usage,
            latency: started.elapsed(),
        })
    }
}

impl EmbedBackend for LiveBackend {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "embedding batch must be non-empty".into(),
            ));
        }
        let body = json!({ "model": self.config.embedding_model, "input": texts });
        self.log_request("embed", &self.config.embedding_model, &texts.join("\n"));
        let url = format!("{}/embeddings", self.config.base_url);
        let value = self.post_with_retries(&url, &body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| GatewayError::MalformedResponse("missing embedding data".into()))?;
        if data.len() != texts.len() {
            return Err(GatewayError::MalformedResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                data.len()
            )));
        }
        let vectors = data
            .iter()
            .map(|item| {
                item["embedding"]
                    .as_array()
                    .map(|xs| xs.iter().filter_map(Value::as_f64).collect::<Vec<f64>>())
                    .ok_or_else(|| GatewayError::MalformedResponse("missing vector".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingBatch {
            texts: texts.to_vec(),
            model_id: self.config.embedding_model.clone(),
            vectors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::EmbedBackend;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    const KEY_VAR: &str = "COLLAB_TEST_KEY_LIVE";

    fn config(var: &str) -> LiveConfig {
        LiveConfig {
            base_url: "http://fake".into(),
            api_key_env: var.into(),
            concurrent_cap: 2,
            ..LiveConfig::default()
        }
    }

    fn completion_response() -> Value {
        json!({
            "choices": [{ "message": { "content": "My chosen price:\n2.00" } }],
            "usage": { "prompt_tokens": 10, "completion_tokens": 5 }
        })
    }

    struct ScriptedTransport {
        // status codes to emit in order; last one repeats
        statuses: Vec<u16>,
        calls: AtomicUsize,
    }

    impl Transport for ScriptedTransport {
        fn post_json(
            &self,
            _url: &str,
            _headers: &[(String, String)],
            _body: &Value,
        ) -> Result<(u16, Value), TransportFault> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            let status = *self.statuses.get(i).or(self.statuses.last()).unwrap();
            Ok((status, completion_response()))
        }
    }

    fn set_key(var: &str) {
        // test-local env mutation; each test uses its own variable name
        unsafe { std::env::set_var(var, "sk-test") };
    }

    #[test]
    fn missing_credential_is_a_configuration_error() {
        let var = "COLLAB_TEST_KEY_MISSING";
        unsafe { std::env::remove_var(var) };
        let backend = LiveBackend::with_transport(
            config(var),
            Box::new(ScriptedTransport {
                statuses: vec![200],
                calls: AtomicUsize::new(0),
            }),
        );
        let err = backend.chat(&ChatRequest::new("hi", "m")).unwrap_err();
        assert!(matches!(err, GatewayError::Configuration(_)));
    }

    #[test]
    fn transient_statuses_are_retried_until_success() {
        set_key(KEY_VAR);
        let transport = ScriptedTransport {
            statuses: vec![429, 503, 200],
            calls: AtomicUsize::new(0),
        };
        let backend = LiveBackend::with_transport(config(KEY_VAR), Box::new(transport))
            .with_sleeper(Box::new(|_| {}));
        let resp = backend.chat(&ChatRequest::new("hi", "m")).unwrap();
        assert_eq!(resp.text, "My chosen price:\n2.00");
    }

    #[test]
    fn exhausted_retries_become_a_transport_error() {
        let var = "COLLAB_TEST_KEY_EXHAUST";
        set_key(var);
        let transport = ScriptedTransport {
            statuses: vec![500],
            calls: AtomicUsize::new(0),
        };
        let backend = LiveBackend::with_transport(config(var), Box::new(transport))
            .with_sleeper(Box::new(|_| {}));
        let err = backend.chat(&ChatRequest::new("hi", "m")).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 5, .. }));
    }

    #[test]
    fn non_transient_rejections_do_not_retry() {
        let var = "COLLAB_TEST_KEY_REJECT";
        set_key(var);
        let transport = ScriptedTransport {
            statuses: vec![400],
            calls: AtomicUsize::new(0),
        };
        let backend = LiveBackend::with_transport(config(var), Box::new(transport))
            .with_sleeper(Box::new(|_| {}));
        let err = backend.chat(&ChatRequest::new("hi", "m")).unwrap_err();
        assert!(matches!(err, GatewayError::Rejected { status: 400, .. }));
    }

    struct CountingTransport {
        active: Arc<AtomicUsize>,
        peak: Arc<AtomicUsize>,
    }

    impl Transport for CountingTransport {
        fn post_json(
            &self,
            _url: &str,
            _headers: &[(String, String)],
            _body: &Value,
        ) -> Result<(u16, Value), TransportFault> {
            let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(15));
            self.active.fetch_sub(1, Ordering::SeqCst);
            Ok((200, completion_response()))
        }
    }

    #[test]
    fn concurrent_requests_respect_the_cap() {
        let var = "COLLAB_TEST_KEY_CAP";
        set_key(var);
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let transport = CountingTransport {
            active: Arc::clone(&active),
            peak: Arc::clone(&peak),
        };
        let backend = Arc::new(LiveBackend::with_transport(
            config(var),
            Box::new(transport),
        ));
        std::thread::scope(|scope| {
            for _ in 0..8 {
                let backend = Arc::clone(&backend);
                scope.spawn(move || {
                    backend.chat(&ChatRequest::new("hi", "m")).unwrap();
                });
            }
        });
        assert!(
            peak.load(Ordering::SeqCst) <= 2,
            "peak {}",
            peak.load(Ordering::SeqCst)
        );
    }

    struct EmbeddingTransport;

    impl Transport for EmbeddingTransport {
        fn post_json(
            &self,
            url: &str,
            _headers: &[(String, String)],
            body: &Value,
        ) -> Result<(u16, Value), TransportFault> {
            assert!(url.ends_with("/embeddings"), "{url}");
            let n = body["input"].as_array().unwrap().len();
            let data: Vec<Value> = (0..n)
                .map(|i| json!({ "embedding": [i as f64, 1.0, 0.0] }))
                .collect();
            Ok((200, json!({ "data": data })))
        }
    }

    #[test]
    fn embeddings_parse_one_vector_per_text() {
        let var = "COLLAB_TEST_KEY_EMBED";
        set_key(var);
        let backend = LiveBackend::with_transport(config(var), Box::new(EmbeddingTransport));
        let batch = backend
            .embed(&["first".to_string(), "second".to_string()])
            .unwrap();
        assert_eq!(batch.vectors.len(), 2);
        assert_eq!(batch.vectors[1], vec![1.0, 1.0, 0.0]);
        assert_eq!(batch.dimension(), 3);
        assert!(backend.embed(&[]).is_err());
    }

    #[test]
    fn prompts_are_redacted_when_a_credential_is_present() {
        let var = "COLLAB_TEST_KEY_REDACT";
        set_key(var);
        let lines: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(vec![]));
        let sink_lines = Arc::clone(&lines);
        let mut cfg = config(var);
        cfg.redaction = RedactionLevel::Full; // forced back to Redacted by the credential
        let backend = LiveBackend::with_transport(
            cfg,
            Box::new(ScriptedTransport {
                statuses: vec![200],
                calls: AtomicUsize::new(0),
            }),
        )
        .with_log_sink(Box::new(move |line| {
            sink_lines.lock().unwrap().push(line.to_string())
        }));
        let secret_prompt = "SECRET MARKET DATA 1234";
        backend.chat(&ChatRequest::new(secret_prompt, "m")).unwrap();
        let logged = lines.lock().unwrap().join("\n");
        assert!(
            !logged.contains(secret_prompt),
            "prompt text leaked: {logged}"
        );
        assert!(logged.contains("prompt bytes"));
    }
}
