//! Embedding vectors for task definitions and demonstrations, fetched from
//! an OpenAI-compatible `/embeddings` endpoint and cached by content hash.

mod cache;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use cache::write_atomic;
pub use cache::{CacheError, CacheKey, EmbeddingCache};

use crate::corpus::{demo_text, expand_multi_answers, DemoTextMode, TaskRecord};
use crate::service::{self, ServiceConfig, ServiceError};

/// A finite, non-empty vector of 32-bit reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VectorError {
    #[error("embedding vector is empty")]
    Empty,
    #[error("embedding vector has a non-finite value at position {0}")]
    NonFinite(usize),
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = VectorError;
    fn try_from(v: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Anything that turns a batch of texts into raw vectors, in input order.
pub trait EmbeddingService: Send + Sync {
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, ServiceError>;
}

pub struct HttpEmbeddingService {
    config: ServiceConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpEmbeddingService {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        Ok(Self {
            client: config.http_client()?,
            api_key: config.api_key(),
            config,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl EmbeddingService for HttpEmbeddingService {
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, ServiceError> {
        let body = serde_json::json!({ "model": model, "input": texts });
        let resp: EmbeddingResponse = service::post_json(
            &self.client,
            &self.config.endpoint("embeddings"),
            self.api_key.as_deref(),
            &body,
        )?;
        let mut data = resp.data;
        if data.len() != texts.len() {
            return Err(ServiceError::Decode(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service failed for inputs {failed_indices:?}: {message}")]
    Service {
        failed_indices: Vec<usize>,
        message: String,
    },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("service returned an invalid vector: {0}")]
    InvalidVector(#[from] VectorError),
    #[error("nothing to embed")]
    EmptyInput,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Batching, caching front end over an [`EmbeddingService`].
#[derive(Clone)]
pub struct Embedder {
    service: Arc<dyn EmbeddingService>,
    cache: Arc<EmbeddingCache>,
    model: String,
    batch_size: usize,
    parallelism: usize,
    retry: crate::retry::RetryPolicy,
    network_calls: Arc<std::sync::atomic::AtomicUsize>,
}

impl Embedder {
    pub fn new(
        service: Arc<dyn EmbeddingService>,
        cache: Arc<EmbeddingCache>,
        config: &ServiceConfig,
    ) -> Self {
        Self {
            service,
            cache,
            model: config.model.clone(),
            batch_size: config.batch_size.max(1),
            parallelism: config.parallelism.max(1),
            retry: config.retry,
            network_calls: Arc::default(),
        }
    }

    /// Batches that missed the cache and reached the service.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(std::sync::atomic::Ordering::SeqCst)
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// Embeds `texts`; `output[i]` corresponds to `texts[i]`.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let keys: Vec<CacheKey> = texts
            .iter()
            .map(|t| CacheKey::new(&self.model, t))
            .collect();

        // Unique cache misses, first-appearance order.
        let mut pending: Vec<usize> = Vec::new();
        let mut seen: HashMap<&CacheKey, ()> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if self.cache.get(key).is_none() && seen.insert(key, ()).is_none() {
                pending.push(i);
            }
        }

        if !pending.is_empty() {
            let batches: Vec<&[usize]> = pending.chunks(self.batch_size).collect();
            let results: Vec<Result<Vec<Vec<f32>>, ServiceError>> =
                service::bounded(self.parallelism, || {
                    use rayon::prelude::*;
                    batches
                        .par_iter()
                        .map(|batch| {
                            let inputs: Vec<String> =
                                batch.iter().map(|&i| texts[i].clone()).collect();
                            self.network_calls
                                .fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                            self.retry.run(|| self.service.embed(&self.model, &inputs))
                        })
                        .collect()
                });

            let mut expected = self.cache.model_dim(&self.model);
            let mut failed = Vec::new();
            let mut message = String::new();
            for (batch, result) in batches.iter().zip(results) {
                match result {
                    Ok(vectors) if vectors.len() == batch.len() => {
                        for (&i, values) in batch.iter().zip(vectors) {
                            let v = EmbeddingVector::new(values)?;
                            match expected {
                                Some(d) if d != v.dim() => {
                                    return Err(EmbedError::DimensionMismatch {
                                        expected: d,
                                        got: v.dim(),
                                    })
                                }
                                _ => expected = Some(v.dim()),
                            }
                            self.cache.put(keys[i].clone(), v);
                        }
                    }
                    Ok(vectors) => {
                        failed.extend(batch.iter().copied());
                        message = format!(
                            "batch of {} returned {} vectors",
                            batch.len(),
                            vectors.len()
                        );
                    }
                    Err(e) => {
                        failed.extend(batch.iter().copied());
                        message = e.to_string();
                    }
                }
            }
            if !failed.is_empty() {
                // Report every input position that shares a failed text.
                let failed_keys: Vec<&CacheKey> = failed.iter().map(|&i| &keys[i]).collect();
                let failed_indices = keys
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| failed_keys.contains(k))
                    .map(|(i, _)| i)
                    .collect();
                return Err(EmbedError::Service {
                    failed_indices,
                    message,
                });
            }
        }

        let out: Vec<EmbeddingVector> = keys
            .iter()
            .map(|k| self.cache.get(k).expect("embedded above"))
            .collect();
        let dim = out[0].dim();
        if let Some(v) = out.iter().find(|v| v.dim() != dim) {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        Ok(out)
    }

    /// Definition vector plus one vector per expanded demonstration.
    pub fn embed_task(
        &self,
        task: &TaskRecord,
        mode: DemoTextMode,
    ) -> Result<(EmbeddingVector, Vec<EmbeddingVector>), EmbedError> {
        let (demos, _) = expand_multi_answers(task);
        let mut texts = Vec::with_capacity(demos.len() + 1);
        texts.push(task.definition.clone());
        texts.extend(demos.iter().map(|d| demo_text(d, mode)));
        let mut vectors = self.embed_batch(&texts)?;
        let demo_vectors = vectors.split_off(1);
        Ok((vectors.pop().expect("definition vector"), demo_vectors))
    }
}
