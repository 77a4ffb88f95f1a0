//! Text-embedding contract and its backends.
//!
//! Every backend implements [`Embedder`]. Vectors come back raw (not
//! normalized); scale is handled by the cosine in [`crate::fusion`].

mod cache;
mod file;
mod reference;
mod remote;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use cache::CachedEmbedder;
pub use file::FileEmbedder;
pub use reference::{word_tokens, ReferenceEmbedder};
pub use remote::RemoteEmbedder;

/// Environment variable that overrides the remote embedding endpoint.
pub const ENDPOINT_ENV: &str = "LAWFUSE_EMBED_ENDPOINT";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid input{}: {reason}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    InvalidInput { index: Option<usize>, reason: String },
    #[error("embedding backend unavailable (retryable): {0}")]
    Retryable(String),
    #[error("embedding protocol error: {0}")]
    Protocol(String),
    #[error("no stored embedding for key {0:?}")]
    MissingKey(String),
    #[error("embedding sidecar line {line}: {reason}")]
    Sidecar { line: usize, reason: String },
    #[error("invalid embedder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Retryable(_))
    }

    fn at_index(self, index: usize) -> Self {
        match self {
            EmbedError::InvalidInput { reason, .. } => EmbedError::InvalidInput {
                index: Some(index),
                reason,
            },
            other => other,
        }
    }
}

/// Dense embedding with at least one coordinate, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::InvalidInput {
                index: None,
                reason: "embedding must have at least one dimension".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidInput {
                index: None,
                reason: format!("non-finite value at coordinate {i}"),
            });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T {
        crate::scalar::l2_norm(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector {
            values: self
                .values
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// A text → vector function with a fixed output dimension.
///
/// Implementations must be deterministic for a given configuration and text,
/// and safe to call from several threads.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifies the configuration; equal fingerprints mean equal outputs.
    fn fingerprint(&self) -> String;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Element `i` equals `embed_text(texts[i])`. Inputs are validated up
    /// front so a bad element fails the batch before any backend work.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        validate_batch(texts)?;
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| self.embed_text(t).map_err(|e| e.at_index(i)))
            .collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed_text(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

pub(crate) fn validate_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::InvalidInput {
            index: None,
            reason: "text is empty".into(),
        });
    }
    Ok(())
}

pub(crate) fn validate_batch(texts: &[&str]) -> Result<(), EmbedError> {
    for (i, t) in texts.iter().enumerate() {
        validate_text(t).map_err(|e| e.at_index(i))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Reference,
    File,
    Remote,
}

impl std::str::FromStr for EmbedderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Self::Reference),
            "file" => Ok(Self::File),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown embedder kind {other:?} (expected reference|file|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// Reference kind only.
    pub seed: u64,
    /// Remote kind only.
    pub endpoint: Option<String>,
    /// File kind only: line-delimited `{key, vector}` records.
    pub sidecar: Option<PathBuf>,
    /// LRU entries; 0 disables the cache.
    pub cache_capacity: usize,
    pub timeout_secs: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Reference,
            dim: 256,
            seed: 0,
            endpoint: None,
            sidecar: None,
            cache_capacity: 4096,
            timeout_secs: 30,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be at least 1".into()));
        }
        match self.kind {
            EmbedderKind::Remote if self.endpoint.as_deref().unwrap_or("").is_empty() => Err(
                EmbedError::Config(format!("remote embedder needs an endpoint (or {ENDPOINT_ENV})")),
            ),
            EmbedderKind::File if self.sidecar.is_none() => {
                Err(EmbedError::Config("file embedder needs a sidecar path".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        self.validate()?;
        let inner: Box<dyn Embedder> = match self.kind {
            EmbedderKind::Reference => Box::new(ReferenceEmbedder::new(self.dim, self.seed)?),
            EmbedderKind::File => {
                let path = self.sidecar.as_ref().expect("validated");
                Box::new(FileEmbedder::open(path, Some(self.dim))?)
            }
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
                self.endpoint.as_deref().expect("validated"),
                self.dim,
                std::time::Duration::from_secs(self.timeout_secs),
            )?),
        };
        Ok(match self.cache_capacity {
            0 => inner,
            cap => Box::new(CachedEmbedder::new(inner, cap)),
        })
    }
}
