use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::scan::{build_pool, top_k, Directions};
use super::{FusionError, LawMatrix, Mode, QueryEmbedding, RetrievalConfig, ScoredHit};
use crate::embedding::{EmbedError, Embedder};
use crate::keywords::{embed_keywords, KeywordError, KeywordExtractor};
use crate::store::StatuteCorpus;
use crate::Scalar;

/// A failed retrieval, tagged with the stage that failed.
#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("extract stage: {0}")]
    Extract(#[source] KeywordError),
    #[error("embed stage: {0}")]
    EmbedQuery(#[source] EmbedError),
    #[error("embed stage: {0}")]
    EmbedKeywords(#[source] KeywordError),
    #[error("score stage: {0}")]
    Score(#[source] FusionError),
    #[error("rank stage: {0}")]
    Rank(#[source] FusionError),
}

impl RetrieveError {
    pub fn stage(&self) -> &'static str {
        match self {
            RetrieveError::Extract(_) => "extract",
            RetrieveError::EmbedQuery(_) | RetrieveError::EmbedKeywords(_) => "embed",
            RetrieveError::Score(_) => "score",
            RetrieveError::Rank(_) => "rank",
        }
    }

    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            RetrieveError::Extract(KeywordError::InvalidInput(_))
                | RetrieveError::EmbedQuery(EmbedError::InvalidInput { .. })
                | RetrieveError::Score(FusionError::InvalidInput(_))
                | RetrieveError::Rank(FusionError::InvalidInput(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieval<T = f64> {
    pub hits: Vec<ScoredHit<T>>,
    /// Keywords extracted from the query; empty in query-only mode.
    pub keywords: Vec<String>,
    pub mode_used: Mode,
    pub skipped_keywords: Vec<String>,
}

/// A built index plus the backends needed to turn a query into hits.
pub struct Retriever<T = f64> {
    corpus: Arc<StatuteCorpus>,
    matrix: LawMatrix<T>,
    embedder: Box<dyn Embedder>,
    extractor: KeywordExtractor,
    config: RetrievalConfig,
    pool: Option<rayon::ThreadPool>,
}

impl<T: Scalar> Retriever<T> {
    pub fn new(
        corpus: Arc<StatuteCorpus>,
        matrix: LawMatrix<T>,
        embedder: Box<dyn Embedder>,
        extractor: KeywordExtractor,
        config: RetrievalConfig,
    ) -> Result<Self, FusionError> {
        config.validate()?;
        matrix.check_corpus(&corpus)?;
        if embedder.dim() != matrix.dim() {
            return Err(FusionError::DimensionMismatch {
                what: "embedder vs index".into(),
                expected: matrix.dim(),
                found: embedder.dim(),
            });
        }
        let pool = match config.threads {
            1 => None,
            n => Some(build_pool(n)?),
        };
        Ok(Self {
            corpus,
            matrix,
            embedder,
            extractor,
            config,
            pool,
        })
    }

    pub fn corpus(&self) -> &StatuteCorpus {
        &self.corpus
    }

    pub fn matrix(&self) -> &LawMatrix<T> {
        &self.matrix
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn retrieve(&self, query: &str) -> Result<Retrieval<T>, RetrieveError> {
        self.retrieve_with(query, &self.config)
    }

    /// Retrieval with per-call overrides of α, k, and mode. The thread count
    /// of the retriever's own pool is used regardless of `cfg.threads`.
    pub fn retrieve_with(&self, query: &str, cfg: &RetrievalConfig) -> Result<Retrieval<T>, RetrieveError> {
        if query.trim().is_empty() {
            return Err(RetrieveError::Extract(KeywordError::InvalidInput("query is empty".into())));
        }
        let keywords = match cfg.mode {
            Mode::Fusion => Some(self.extractor.extract(query).map_err(RetrieveError::Extract)?),
            Mode::QueryOnly => None,
        };
        let query_vec = self
            .embedder
            .embed_text(query)
            .map_err(RetrieveError::EmbedQuery)?;
        let q = QueryEmbedding::new(query_vec.cast::<T>());
        let ke = match &keywords {
            Some(ks) => embed_keywords::<T, _>(ks, self.embedder.as_ref())
                .map_err(RetrieveError::EmbedKeywords)?,
            None => super::KeywordEmbeddings::from_vectors(vec![]),
        };

        let dirs = Directions::prepare(&ke, &q, &self.matrix, cfg).map_err(RetrieveError::Score)?;
        let scores = match &self.pool {
            Some(pool) => dirs.scan_in_pool(&self.matrix, pool),
            None => dirs.scan_serial(&self.matrix),
        };
        let hits = top_k(&scores, cfg.top_k, &self.corpus).map_err(RetrieveError::Rank)?;
        Ok(Retrieval {
            hits,
            skipped_keywords: scores
                .skipped_keywords
                .iter()
                .map(|&i| ke.keywords()[i].clone())
                .collect(),
            keywords: keywords.map(|k| k.as_slice().to_vec()).unwrap_or_default(),
            mode_used: scores.mode_used,
        })
    }
}
