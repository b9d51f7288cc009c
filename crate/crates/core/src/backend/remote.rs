//! Remote backend clients speaking a chat-completions-style HTTP contract.
//!
//! Every response is recorded in a content-addressed file cache keyed by
//! the request hash, so a run with network access can be replayed later
//! byte-identically with no network at all. Transport is behind a trait so
//! tests can drive the clients without sockets.

use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, EmbeddingVector, Embedder, GenerationRequest, TextGenerator};

/// One HTTP response, reduced to what the clients need.
#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal POST-JSON transport.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer_token: &str,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpResponse, BackendError>;
}

/// Production transport backed by a blocking reqwest client.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer_token: &str,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpResponse, BackendError> {
        let response = self
            .client
            .post(url)
            .bearer_auth(bearer_token)
            .json(body)
            .timeout(timeout)
            .send()
            .map_err(|e| BackendError::Failure {
                status: None,
                retriable: true,
                message: format!("transport error: {e}"),
            })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| BackendError::Failure {
            status: Some(status),
            retriable: true,
            message: format!("failed to read body: {e}"),
        })?;
        Ok(HttpResponse { status, body })
    }
}

/// Configuration shared by the remote clients. The API key is read from
/// the named environment variable, never stored in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_api_key_env() -> String {
    "PLANFORGE_API_KEY".to_string()
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

/// Counting gate bounding concurrent in-flight requests.
struct InFlightGate {
    active: Mutex<usize>,
    cond: Condvar,
    cap: usize,
}

impl InFlightGate {
    fn new(cap: usize) -> Self {
        Self {
            active: Mutex::new(0),
            cond: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) {
        let mut active = self.active.lock().unwrap();
        while *active >= self.cap {
            active = self.cond.wait(active).unwrap();
        }
        *active += 1;
    }

    fn release(&self) {
        let mut active = self.active.lock().unwrap();
        *active -= 1;
        self.cond.notify_one();
    }
}

/// Replay-cache counters, reported in run manifests.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

fn cache_key(parts: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(parts).expect("serializable cache key");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct ResponseCache {
    dir: Option<PathBuf>,
    stats: Mutex<CacheStats>,
}

impl ResponseCache {
    fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            stats: Mutex::new(CacheStats::default()),
        }
    }

    fn lookup(&self, key: &str) -> Option<String> {
        let dir = self.dir.as_ref()?;
        let path = dir.join(format!("{key}.json"));
        match std::fs::read_to_string(path) {
            Ok(body) => {
                self.stats.lock().unwrap().hits += 1;
                Some(body)
            }
            Err(_) => None,
        }
    }

    fn store(&self, key: &str, body: &str) {
        self.stats.lock().unwrap().misses += 1;
        if let Some(dir) = &self.dir {
            if std::fs::create_dir_all(dir).is_ok() {
                let _ = std::fs::write(dir.join(format!("{key}.json")), body);
            }
        }
    }

    fn stats(&self) -> CacheStats {
        *self.stats.lock().unwrap()
    }
}

fn classify_status(status: u16, body: &str) -> BackendError {
    BackendError::Failure {
        status: Some(status),
        retriable: status >= 500 || status == 429,
        message: format!("remote returned {status}: {}", body.chars().take(200).collect::<String>()),
    }
}

/// Chat-completions text generation client with response caching.
pub struct ChatCompletionsClient {
    config: RemoteConfig,
    transport: Box<dyn HttpTransport>,
    gate: InFlightGate,
    cache: ResponseCache,
}

impl ChatCompletionsClient {
    pub fn new(config: RemoteConfig, transport: Box<dyn HttpTransport>) -> Self {
        let gate = InFlightGate::new(config.max_in_flight);
        let cache = ResponseCache::new(config.cache_dir.clone());
        Self {
            config,
            transport,
            gate,
            cache,
        }
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    fn api_key(&self) -> Result<String, BackendError> {
        std::env::var(&self.config.api_key_env)
            .map_err(|_| BackendError::MissingApiKey(self.config.api_key_env.clone()))
    }
}

impl TextGenerator for ChatCompletionsClient {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "seed": request.seed,
            "max_tokens": request.max_length,
        });
        let key = cache_key(&serde_json::json!({
            "endpoint": self.config.endpoint,
            "grammar": request.grammar.as_str(),
            "body": body,
        }));
        if let Some(hit) = self.cache.lookup(&key) {
            return Ok(hit);
        }
        let token = self.api_key()?;
        self.gate.acquire();
        let result = self.transport.post_json(
            &self.config.endpoint,
            &token,
            &body,
            Duration::from_secs(self.config.timeout_secs),
        );
        self.gate.release();
        let response = result?;
        if response.status >= 400 {
            return Err(classify_status(response.status, &response.body));
        }
        let parsed: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| BackendError::Failure {
                status: Some(response.status),
                retriable: false,
                message: format!("unparseable response body: {e}"),
            })?;
        let content = parsed["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Failure {
                status: Some(response.status),
                retriable: false,
                message: "response lacks choices[0].message.content".into(),
            })?
            .to_string();
        self.cache.store(&key, &content);
        Ok(content)
    }
}

/// Remote embedding client. Accepts any dimension and normalizes.
pub struct RemoteEmbedder {
    config: RemoteConfig,
    transport: Box<dyn HttpTransport>,
    gate: InFlightGate,
    cache: ResponseCache,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, transport: Box<dyn HttpTransport>) -> Self {
        let gate = InFlightGate::new(config.max_in_flight);
        let cache = ResponseCache::new(config.cache_dir.clone());
        Self {
            config,
            transport,
            gate,
            cache,
        }
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::MalformedPayload("empty embed batch".into()));
        }
        let body = serde_json::json!({
            "model": self.config.model,
            "input": texts,
        });
        let key = cache_key(&serde_json::json!({
            "endpoint": self.config.endpoint,
            "body": body,
        }));
        let body_text = if let Some(hit) = self.cache.lookup(&key) {
            hit
        } else {
            let token = std::env::var(&self.config.api_key_env)
                .map_err(|_| BackendError::MissingApiKey(self.config.api_key_env.clone()))?;
            self.gate.acquire();
            let result = self.transport.post_json(
                &self.config.endpoint,
                &token,
                &body,
                Duration::from_secs(self.config.timeout_secs),
            );
            self.gate.release();
            let response = result?;
            if response.status >= 400 {
                return Err(classify_status(response.status, &response.body));
            }
            self.cache.store(&key, &response.body);
            response.body
        };
        let parsed: serde_json::Value =
            serde_json::from_str(&body_text).map_err(|e| BackendError::Failure {
                status: None,
                retriable: false,
                message: format!("unparseable embedding body: {e}"),
            })?;
        let data = parsed["data"].as_array().ok_or_else(|| BackendError::Failure {
            status: None,
            retriable: false,
            message: "embedding response lacks data".into(),
        })?;
        data.iter()
            .map(|item| {
                let values: Vec<f32> = item["embedding"]
                    .as_array()
                    .ok_or_else(|| BackendError::Failure {
                        status: None,
                        retriable: false,
                        message: "embedding entry lacks values".into(),
                    })?
                    .iter()
                    .map(|v| v.as_f64().unwrap_or(0.0) as f32)
                    .collect();
                Ok(EmbeddingVector::from_raw(values, self.config.model.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use crate::backend::GrammarId;

    struct ScriptedTransport {
        responses: Mutex<Vec<HttpResponse>>,
        calls: Arc<AtomicUsize>,
    }

    impl HttpTransport for ScriptedTransport {
        fn post_json(
            &self,
            _url: &str,
            _token: &str,
            _body: &serde_json::Value,
            _timeout: Duration,
        ) -> Result<HttpResponse, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut responses = self.responses.lock().unwrap();
            if responses.is_empty() {
                panic!("transport called more often than scripted");
            }
            Ok(responses.remove(0))
        }
    }

    fn chat_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        })
        .to_string()
    }

    #[test]
    fn cache_hit_skips_network() {
        let dir = std::env::temp_dir().join(format!("pf-cache-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let calls = Arc::new(AtomicUsize::new(0));
        let config = RemoteConfig {
            endpoint: "https://example.invalid/v1/chat/completions".into(),
            model: "test-model".into(),
            api_key_env: "PLANFORGE_TEST_KEY".into(),
            cache_dir: Some(dir.clone()),
            max_in_flight: 2,
            timeout_secs: 5,
        };
        std::env::set_var("PLANFORGE_TEST_KEY", "token");
        let request = GenerationRequest::new("hello", GrammarId::FreeText, 1);

        let first = ChatCompletionsClient::new(
            config.clone(),
            Box::new(ScriptedTransport {
                responses: Mutex::new(vec![HttpResponse {
                    status: 200,
                    body: chat_body("served"),
                }]),
                calls: calls.clone(),
            }),
        );
        assert_eq!(first.generate(&request).unwrap(), "served");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(first.cache_stats().misses, 1);

        // second client with an empty script: must be served from cache
        let second = ChatCompletionsClient::new(
            config,
            Box::new(ScriptedTransport {
                responses: Mutex::new(vec![]),
                calls: calls.clone(),
            }),
        );
        assert_eq!(second.generate(&request).unwrap(), "served");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(second.cache_stats().hits, 1);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn server_errors_are_retriable() {
        let config = RemoteConfig {
            endpoint: "https://example.invalid".into(),
            model: "m".into(),
            api_key_env: "PLANFORGE_TEST_KEY2".into(),
            cache_dir: None,
            max_in_flight: 1,
            timeout_secs: 5,
        };
        std::env::set_var("PLANFORGE_TEST_KEY2", "token");
        let client = ChatCompletionsClient::new(
            config,
            Box::new(ScriptedTransport {
                responses: Mutex::new(vec![HttpResponse {
                    status: 503,
                    body: "overloaded".into(),
                }]),
                calls: Arc::new(AtomicUsize::new(0)),
            }),
        );
        let err = client
            .generate(&GenerationRequest::new("x", GrammarId::FreeText, 0))
            .unwrap_err();
        match err {
            BackendError::Failure { status, retriable, .. } => {
                assert_eq!(status, Some(503));
                assert!(retriable);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn client_errors_are_not_retriable() {
        let config = RemoteConfig {
            endpoint: "https://example.invalid".into(),
            model: "m".into(),
            api_key_env: "PLANFORGE_TEST_KEY3".into(),
            cache_dir: None,
            max_in_flight: 1,
            timeout_secs: 5,
        };
        std::env::set_var("PLANFORGE_TEST_KEY3", "token");
        let client = ChatCompletionsClient::new(
            config,
            Box::new(ScriptedTransport {
                responses: Mutex::new(vec![HttpResponse {
                    status: 400,
                    body: "bad request".into(),
                }]),
                calls: Arc::new(AtomicUsize::new(0)),
            }),
        );
        let err = client
            .generate(&GenerationRequest::new("x", GrammarId::FreeText, 0))
            .unwrap_err();
        match err {
            BackendError::Failure { retriable, .. } => assert!(!retriable),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn missing_api_key_is_reported() {
        let config = RemoteConfig {
            endpoint: "https://example.invalid".into(),
            model: "m".into(),
            api_key_env: "PLANFORGE_UNSET_KEY".into(),
            cache_dir: None,
            max_in_flight: 1,
            timeout_secs: 5,
        };
        std::env::remove_var("PLANFORGE_UNSET_KEY");
        let client = ChatCompletionsClient::new(
            config,
            Box::new(ScriptedTransport {
                responses: Mutex::new(vec![]),
                calls: Arc::new(AtomicUsize::new(0)),
            }),
        );
        let err = client
            .generate(&GenerationRequest::new("x", GrammarId::FreeText, 0))
            .unwrap_err();
        assert!(matches!(err, BackendError::MissingApiKey(_)));
    }

    #[test]
    fn in_flight_cap_is_respected() {
        struct BlockingTransport {
            peak: Arc<AtomicUsize>,
            active: Arc<AtomicUsize>,
        }
        impl HttpTransport for BlockingTransport {
            fn post_json(
                &self,
                _url: &str,
                _token: &str,
                body: &serde_json::Value,
                _timeout: Duration,
            ) -> Result<HttpResponse, BackendError> {
                let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.active.fetch_sub(1, Ordering::SeqCst);
                let content = body["messages"][0]["content"].as_str().unwrap().to_string();
                Ok(HttpResponse {
                    status: 200,
                    body: chat_body(&content),
                })
            }
        }
        let peak = Arc::new(AtomicUsize::new(0));
        let config = RemoteConfig {
            endpoint: "https://example.invalid".into(),
            model: "m".into(),
            api_key_env: "PLANFORGE_TEST_KEY4".into(),
            cache_dir: None,
            max_in_flight: 2,
            timeout_secs: 5,
        };
        std::env::set_var("PLANFORGE_TEST_KEY4", "token");
        let client = Arc::new(ChatCompletionsClient::new(
            config,
            Box::new(BlockingTransport {
                peak: peak.clone(),
                active: Arc::new(AtomicUsize::new(0)),
            }),
        ));
        std::thread::scope(|scope| {
            for i in 0..6 {
                let client = client.clone();
                scope.spawn(move || {
                    let req =
                        GenerationRequest::new(format!("prompt {i}"), GrammarId::FreeText, i);
                    client.generate(&req).unwrap();
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2, "cap exceeded");
    }
}
