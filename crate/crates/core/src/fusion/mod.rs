//! Keyword-fusion retrieval.
//!
//! For every extracted keyword `k_i` the fused direction
//! `v_i = k_i/‖k_i‖ + α·s/‖s‖` is formed from the keyword and query
//! embeddings, and each statute `l_j` accumulates `cos(v_i, l_j)`. The
//! statutes with the largest totals are returned. `Mode::QueryOnly` is the
//! plain baseline `cos(s, l_j)`.
//!
//! Per-row summation order is always keyword index ascending, so the serial
//! and parallel scans agree to the bit.

mod index;
mod retriever;
mod scan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, EmbeddingVector};
use crate::scalar::{dot, l2_norm};
use crate::Scalar;

pub use index::{build_index, load_index, save_index, LawMatrix, INDEX_MAGIC, INDEX_VERSION};
pub use retriever::{Retrieval, RetrieveError, Retriever};
pub use scan::{scan_parallel, score_corpus, top_k};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("zero-norm {0} has no direction")]
    ZeroNorm(String),
    #[error("statute {id:?} embeds to the zero vector and cannot be scored")]
    ZeroNormStatute { id: String },
    #[error("embedding statute {id:?}: {source}")]
    Embedding {
        id: String,
        #[source]
        source: EmbedError,
    },
    #[error("stale index: built for corpus {index}, current corpus is {corpus}")]
    StaleIndex { index: String, corpus: String },
    #[error("index parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Fusion,
    QueryOnly,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fusion" => Ok(Mode::Fusion),
            "query_only" | "query-only" => Ok(Mode::QueryOnly),
            other => Err(format!("unknown mode {other:?} (expected fusion|query_only)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Fusion => "fusion",
            Mode::QueryOnly => "query_only",
        })
    }
}

/// What to do with a keyword whose embedding is the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroKeywordPolicy {
    #[default]
    Skip,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Weight of the whole-query direction in each fused vector.
    pub alpha: f64,
    pub top_k: usize,
    pub mode: Mode,
    /// Divide accumulated scores by the number of keywords that contributed.
    pub mean_scores: bool,
    pub zero_keyword: ZeroKeywordPolicy,
    /// Scan threads; 1 scans serially.
    pub threads: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            top_k: 5,
            mode: Mode::Fusion,
            mean_scores: false,
            zero_keyword: ZeroKeywordPolicy::Skip,
            threads: 1,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(FusionError::InvalidInput(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if self.top_k == 0 {
            return Err(FusionError::InvalidInput("top_k must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(FusionError::InvalidInput("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Embeddings of the extracted keywords, aligned with the keyword strings.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordEmbeddings<T = f64> {
    vectors: Vec<EmbeddingVector<T>>,
    source_keywords: Vec<String>,
}

impl<T: Scalar> KeywordEmbeddings<T> {
    /// Panics if `vectors` and `keywords` differ in length.
    pub fn new(vectors: Vec<EmbeddingVector<T>>, keywords: Vec<String>) -> Self {
        assert_eq!(vectors.len(), keywords.len(), "keyword/vector count mismatch");
        Self {
            vectors,
            source_keywords: keywords,
        }
    }

    /// Keywords named `k0`, `k1`, ...; convenient when only vectors matter.
    pub fn from_vectors(vectors: Vec<EmbeddingVector<T>>) -> Self {
        let names = (0..vectors.len()).map(|i| format!("k{i}")).collect();
        Self::new(vectors, names)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[EmbeddingVector<T>] {
        &self.vectors
    }

    pub fn keywords(&self) -> &[String] {
        &self.source_keywords
    }

    /// Common dimension, or `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(EmbeddingVector::dim)
    }

    pub fn zero_norm_keywords(&self) -> Vec<usize> {
        self.vectors
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_zero())
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding<T = f64> {
    vector: EmbeddingVector<T>,
}

impl<T: Scalar> QueryEmbedding<T> {
    pub fn new(vector: EmbeddingVector<T>) -> Self {
        Self { vector }
    }

    pub fn vector(&self) -> &EmbeddingVector<T> {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.dim()
    }
}

/// `k/‖k‖ + α·s/‖s‖`, deliberately not re-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> FusedVector<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Per-statute accumulated scores, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T = f64> {
    pub scores: Vec<T>,
    /// Mode actually used; fusion falls back to query-only when every
    /// keyword is zero-norm.
    pub mode_used: Mode,
    /// Keyword indices that contributed nothing (zero-norm keyword or
    /// zero-norm fused vector).
    pub skipped_keywords: Vec<usize>,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredHit<T = f64> {
    pub rank: usize,
    pub statute_id: String,
    /// Corpus position.
    pub row: usize,
    pub score: T,
}

/// `a·b / (‖a‖‖b‖)`, clamped to [-1, 1].
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T, FusionError> {
    if a.len() != b.len() {
        return Err(FusionError::DimensionMismatch {
            what: "cosine operands".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na.is_zero() || nb.is_zero() {
        return Err(FusionError::InvalidInput("cosine of a zero-norm vector".into()));
    }
    Ok(clamp_unit(dot(a, b) / (na * nb)))
}

#[inline]
pub(crate) fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

/// Fuses a keyword direction with the query direction. With `alpha == 0` the
/// query is ignored entirely (it may even be zero).
pub fn fuse<T: Scalar>(keyword: &[T], query: &[T], alpha: T) -> Result<FusedVector<T>, FusionError> {
    if !(alpha.is_finite() && alpha >= T::zero()) {
        return Err(FusionError::InvalidInput(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if keyword.len() != query.len() {
        return Err(FusionError::DimensionMismatch {
            what: "query vs keyword".into(),
            expected: keyword.len(),
            found: query.len(),
        });
    }
    let nk = l2_norm(keyword);
    if nk.is_zero() {
        return Err(FusionError::ZeroNorm("keyword embedding".into()));
    }
    if alpha.is_zero() {
        return Ok(FusedVector {
            values: keyword.iter().map(|&k| k / nk).collect(),
        });
    }
    let ns = l2_norm(query);
    if ns.is_zero() {
        return Err(FusionError::InvalidInput(
            "zero-norm query embedding with alpha > 0".into(),
        ));
    }
    let w = alpha / ns;
    Ok(FusedVector {
        values: keyword
            .iter()
            .zip(query)
            .map(|(&k, &s)| k / nk + w * s)
            .collect(),
    })
}
