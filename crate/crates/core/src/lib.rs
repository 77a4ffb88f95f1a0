//! Hybrid statute retrieval.
//!
//! Free-form legal questions are matched against a statute corpus by extracting
//! keywords, fusing each keyword direction with the whole-query direction, and
//! accumulating cosine similarities against every statute embedding. The crate
//! also carries the evaluation side: a multiple-choice exam grader, a pairwise
//! Elo arena, and a consult → reference → draft → self-suggestion answer
//! pipeline over a pluggable LLM backend.
//!
//! The numeric core ([`fusion`], [`arena::elo`]) is generic over [`Scalar`];
//! the `*64` / `*32` aliases below pick a concrete precision.

pub mod arena;
pub mod embedding;
pub mod fusion;
mod http;
pub mod keywords;
pub mod pipeline;
pub mod scalar;
pub mod store;

pub use scalar::Scalar;

pub use embedding::{EmbeddingVector, Embedder, EmbedderConfig, EmbedderKind};
pub use store::{StatuteCorpus, StatuteRecord};

pub use fusion::{Mode, RetrievalConfig, ScoredHit};
pub use keywords::{ExtractorConfig, ExtractorKind, KeywordSet};
pub use pipeline::{run_pipeline, ConsultRequest, PipelineResponse};

/// Double-precision law matrix; the default for indexes written to disk.
pub type LawMatrix64 = fusion::LawMatrix<f64>;
/// Single-precision law matrix; halves resident memory for large corpora.
pub type LawMatrix32 = fusion::LawMatrix<f32>;
pub type ScoreVector64 = fusion::ScoreVector<f64>;
pub type ScoreVector32 = fusion::ScoreVector<f32>;
pub type Retriever64 = fusion::Retriever<f64>;
pub type Retriever32 = fusion::Retriever<f32>;
pub type ScoredHit64 = fusion::ScoredHit<f64>;
pub type KeywordEmbeddings64 = fusion::KeywordEmbeddings<f64>;
pub type QueryEmbedding64 = fusion::QueryEmbedding<f64>;
