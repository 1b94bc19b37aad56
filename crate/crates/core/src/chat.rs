//! OpenAI-compatible chat completions with a content-addressed response cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::embedding::CacheError;
use crate::hashing::hash_fields;
use crate::retry::RetryPolicy;
use crate::service::{self, ServiceConfig, ServiceError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn single(model: &str, prompt: String, temperature: f64, max_tokens: u32) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage::user(prompt)],
            temperature,
            max_tokens,
        }
    }

    /// Stable hash of (model, messages, temperature).
    pub fn request_key(&self) -> String {
        let temp = self.temperature.to_bits().to_le_bytes();
        let mut fields: Vec<&[u8]> = vec![self.model.as_bytes(), &temp];
        for m in &self.messages {
            fields.push(m.role.as_bytes());
            fields.push(m.content.as_bytes());
        }
        hash_fields(fields)
    }

    pub fn prompt(&self) -> &str {
        self.messages.last().map_or("", |m| m.content.as_str())
    }
}

pub trait ChatService: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ServiceError>;
}

pub struct HttpChatService {
    config: ServiceConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpChatService {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        Ok(Self {
            client: config.http_client()?,
            api_key: config.api_key(),
            config,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatService for HttpChatService {
    fn complete(&self, request: &ChatRequest) -> Result<String, ServiceError> {
        let body =
            serde_json::to_value(request).map_err(|e| ServiceError::Decode(e.to_string()))?;
        let resp: ChatResponse = service::post_json(
            &self.client,
            &self.config.endpoint("chat/completions"),
            self.api_key.as_deref(),
            &body,
        )?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ServiceError::Decode("response has no message content".into()))
    }
}

/// Completions keyed by [`ChatRequest::request_key`], persisted as one
/// pretty-printed JSON object sorted by key.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let io = |source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        };
        let entries = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(io)?;
            serde_json::from_str(&text).map_err(|_| CacheError::Corrupt {
                path: path.to_path_buf(),
                line: 0,
            })?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn put(&self, key: String, completion: String) {
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, completion);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CacheError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let text = serde_json::to_string_pretty(&*self.entries.read().expect("cache lock"))
            .expect("string map serializes");
        crate::embedding::write_atomic(path, text.as_bytes())
    }
}

/// Cached, retrying front end over a [`ChatService`].
#[derive(Clone)]
pub struct ChatClient {
    service: Arc<dyn ChatService>,
    cache: Arc<ResponseCache>,
    retry: RetryPolicy,
    model: String,
    parallelism: usize,
    network_calls: Arc<AtomicUsize>,
}

impl ChatClient {
    pub fn new(
        service: Arc<dyn ChatService>,
        cache: Arc<ResponseCache>,
        config: &ServiceConfig,
    ) -> Self {
        Self {
            service,
            cache,
            retry: config.retry,
            model: config.model.clone(),
            parallelism: config.parallelism.max(1),
            network_calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Requests that missed the cache and reached the service.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn request(&self, prompt: String, temperature: f64, max_tokens: u32) -> ChatRequest {
        ChatRequest::single(&self.model, prompt, temperature, max_tokens)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, ServiceError> {
        let key = request.request_key();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let completion = self.retry.run(|| self.service.complete(request))?;
        self.cache.put(key, completion.clone());
        Ok(completion)
    }

    /// Completes every request with bounded parallelism; output order
    /// matches input order.
    pub fn complete_all(&self, requests: &[ChatRequest]) -> Vec<Result<String, ServiceError>> {
        service::bounded(self.parallelism, || {
            use rayon::prelude::*;
            requests.par_iter().map(|r| self.complete(r)).collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo(AtomicUsize);

    impl ChatService for Echo {
        fn complete(&self, request: &ChatRequest) -> Result<String, ServiceError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo: {}", request.prompt()))
        }
    }

    fn client() -> (ChatClient, Arc<Echo>) {
        let svc = Arc::new(Echo(AtomicUsize::new(0)));
        let c = ChatClient::new(
            svc.clone(),
            Arc::new(ResponseCache::in_memory()),
            &ServiceConfig::default(),
        );
        (c, svc)
    }

    #[test]
    fn request_key_depends_on_model_messages_temperature() {
        let a = ChatRequest::single("m", "p".into(), 0.0, 10);
        let mut b = a.clone();
        b.max_tokens = 99;
        assert_eq!(a.request_key(), b.request_key());
        b.temperature = 0.7;
        assert_ne!(a.request_key(), b.request_key());
        let c = ChatRequest::single("m2", "p".into(), 0.0, 10);
        assert_ne!(a.request_key(), c.request_key());
    }

    #[test]
    fn cached_requests_skip_service() {
        let (c, svc) = client();
        let reqs: Vec<ChatRequest> = (0..5).map(|i| c.request(format!("p{i}"), 0.0, 8)).collect();
        let first: Vec<String> = c
            .complete_all(&reqs)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(first[3], "echo: p3");
        assert_eq!(svc.0.load(Ordering::SeqCst), 5);
        let again: Vec<String> = c
            .complete_all(&reqs)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(first, again);
        assert_eq!(svc.0.load(Ordering::SeqCst), 5);
        assert_eq!(c.network_calls(), 5);
    }

    #[test]
    fn cache_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.json");
        let cache = ResponseCache::open(&path).unwrap();
        cache.put("k".into(), "v".into());
        cache.save().unwrap();
        assert_eq!(
            ResponseCache::open(&path).unwrap().get("k").as_deref(),
            Some("v")
        );
    }
}
