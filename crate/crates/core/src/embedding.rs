//! Text embedders and the dot-product similarity used for retrieval.
//!
//! The default backend hashes lowercased character trigrams into a fixed
//! number of buckets (64-bit FNV-1a, bucket = hash mod dimension) and
//! L2-normalizes the counts, so dot products between its vectors are cosine
//! similarities. A remote backend can stand in for a neural retriever.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::limit::InFlightLimit;

pub const DEFAULT_DIMENSION: usize = 512;
pub const MIN_DIMENSION: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedder dimension must be at least {MIN_DIMENSION}, got {0}")]
    DimensionTooSmall(usize),
    #[error("embedding service transport error: {0}")]
    Transport(String),
    #[error("embedding service returned an unusable response: {0}")]
    BadResponse(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl EmbeddingError {
    /// Transport failures may succeed on a later attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Neg for EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> Self::Output {
        EmbeddingVector::new(self.values.into_iter().map(|v| -v).collect())
    }
}

/// Dot product of two vectors of equal dimension.
pub fn similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;

    /// Identifies the backend and its settings; persisted indexes are only
    /// reloaded by an embedder with the same fingerprint.
    fn fingerprint(&self) -> String;
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Character trigram hashing embedder.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension < MIN_DIMENSION {
            return Err(EmbeddingError::DimensionTooSmall(dimension));
        }
        Ok(Self { dimension })
    }

    /// Raw per-bucket trigram counts before normalization.
    pub fn bucket_counts(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts = vec![0.0; self.dimension];
        let mut add = |gram: &[char]| {
            let gram: String = gram.iter().collect();
            let bucket = (fnv1a64(gram.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        };
        if chars.len() < 3 {
            // too short for a trigram: the whole text is the only gram
            add(&chars);
        } else {
            chars.windows(3).for_each(add);
        }
        counts
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl Embedder for TrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let counts = self.bucket_counts(text);
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(EmbeddingVector::new(
            counts.into_iter().map(|c| c / norm).collect(),
        ))
    }

    fn fingerprint(&self) -> String {
        format!("local_trigram:fnv1a64:{}", self.dimension)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderBackend {
    #[default]
    LocalTrigram,
    RemoteService,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub backend: EmbedderBackend,
    pub dimension: usize,
    pub url: Option<String>,
    pub timeout_ms: u64,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub max_in_flight: usize,
    pub memoize: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            backend: EmbedderBackend::LocalTrigram,
            dimension: DEFAULT_DIMENSION,
            url: None,
            timeout_ms: 30_000,
            token_env: None,
            max_in_flight: 4,
            memoize: false,
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbeddingError> {
        if self.dimension < MIN_DIMENSION {
            return Err(EmbeddingError::DimensionTooSmall(self.dimension));
        }
        let inner: Arc<dyn Embedder> = match self.backend {
            EmbedderBackend::LocalTrigram => Arc::new(TrigramEmbedder::new(self.dimension)?),
            EmbedderBackend::RemoteService => Arc::new(RemoteEmbedder::new(self)?),
        };
        Ok(if self.memoize {
            Arc::new(MemoEmbedder::new(inner))
        } else {
            inner
        })
    }
}

/// Embedder served over HTTP: `POST {"texts": [..]}` returning `{"vectors": [[..]]}`.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
    dimension: usize,
    limit: InFlightLimit,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    pub fn new(config: &EmbedderConfig) -> Result<Self, EmbeddingError> {
        let url = config
            .url
            .clone()
            .ok_or_else(|| EmbeddingError::Config("remote embedder needs a url".into()))?;
        let token = match &config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                EmbeddingError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| EmbeddingError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url,
            token,
            dimension: config.dimension,
            limit: InFlightLimit::new(config.max_in_flight),
        })
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let _permit = self.limit.acquire();
        let mut request = self.client.post(&self.url).json(&EmbedRequest {
            texts: texts.to_vec(),
        });
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        let body: EmbedResponse = response
            .json()
            .map_err(|e| EmbeddingError::BadResponse(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbeddingError::BadResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() == self.dimension {
                    Ok(EmbeddingVector::new(v))
                } else {
                    Err(EmbeddingError::DimensionMismatch {
                        left: self.dimension,
                        right: v.len(),
                    })
                }
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn fingerprint(&self) -> String {
        format!("remote_service:{}:{}", self.url, self.dimension)
    }
}

/// In-memory memo keyed by exact text.
pub struct MemoEmbedder {
    inner: Arc<dyn Embedder>,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
}

impl MemoEmbedder {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        Self {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }
}

impl Embedder for MemoEmbedder {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if let Some(v) = self.memo.lock().expect("memo lock").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.memo
            .lock()
            .expect("memo lock")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}
