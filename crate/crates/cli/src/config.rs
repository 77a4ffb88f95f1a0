//! Config file plus the flag > env > file > default layering.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use lawfuse::embedding::{self, EmbedderConfig, EmbedderKind};
use lawfuse::fusion::{Mode, RetrievalConfig, ZeroKeywordPolicy};
use lawfuse::keywords::{self, load_idf_table, load_stopwords, ExtractorConfig, ExtractorKind};
use lawfuse::pipeline::{self, PipelineConfig};

use crate::Invalid;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub embedder: EmbedderSection,
    pub extractor: ExtractorSection,
    pub retrieval: RetrievalSection,
    pub arena: ArenaSection,
    pub pipeline: PipelineSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub kind: Option<EmbedderKind>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub endpoint: Option<String>,
    pub sidecar: Option<PathBuf>,
    pub cache_capacity: Option<usize>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSection {
    pub kind: Option<String>,
    pub max_keywords: Option<usize>,
    pub stopwords: Option<PathBuf>,
    pub idf: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub allow_duplicates: Option<bool>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub alpha: Option<f64>,
    pub top_k: Option<usize>,
    pub mode: Option<Mode>,
    pub mean_scores: Option<bool>,
    pub zero_keyword: Option<ZeroKeywordPolicy>,
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaSection {
    pub k_factor: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub templates: Option<PathBuf>,
    pub self_suggestion: Option<bool>,
    pub rounds: Option<usize>,
    pub record_latency: Option<bool>,
    pub timeout_secs: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Invalid(e.to_string()).into())
    }

    /// Paths in the config file are relative to the file itself.
    fn path(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| if p.is_absolute() { p.clone() } else { self.base_dir.join(p) })
    }
}

/// Environment lookup, injectable so precedence can be tested without
/// touching the process environment.
pub type Env<'a> = &'a dyn Fn(&str) -> Option<String>;

pub fn process_env(key: &str) -> Option<String> {
    std::env::var(key).ok().filter(|v| !v.is_empty())
}

fn pick<T>(flag: Option<T>, env: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(env).or(file).unwrap_or(default)
}

#[derive(Debug, Default, Clone)]
pub struct EmbedderFlags {
    pub kind: Option<EmbedderKind>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub endpoint: Option<String>,
    pub sidecar: Option<PathBuf>,
}

pub fn resolve_embedder(flags: &EmbedderFlags, file: &FileConfig, env: Env) -> EmbedderConfig {
    let d = EmbedderConfig::default();
    let f = &file.embedder;
    EmbedderConfig {
        kind: pick(flags.kind, None, f.kind, d.kind),
        dim: pick(flags.dim, None, f.dim, d.dim),
        seed: pick(flags.seed, None, f.seed, d.seed),
        endpoint: flags
            .endpoint
            .clone()
            .or_else(|| env(embedding::ENDPOINT_ENV))
            .or_else(|| f.endpoint.clone()),
        sidecar: flags.sidecar.clone().or_else(|| file.path(&f.sidecar)),
        cache_capacity: pick(None, None, f.cache_capacity, d.cache_capacity),
        timeout_secs: pick(None, None, f.timeout_secs, d.timeout_secs),
    }
}

#[derive(Debug, Default, Clone)]
pub struct ExtractorFlags {
    pub kind: Option<ExtractorKind>,
    pub max_keywords: Option<usize>,
    pub stopwords: Option<PathBuf>,
    pub idf: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub allow_duplicates: bool,
}

pub fn resolve_extractor(flags: &ExtractorFlags, file: &FileConfig, env: Env) -> Result<ExtractorConfig> {
    let d = ExtractorConfig::default();
    let f = &file.extractor;
    let file_kind = f
        .kind
        .as_deref()
        .map(str::parse::<ExtractorKind>)
        .transpose()
        .map_err(Invalid)?;
    let stopwords = match flags.stopwords.clone().or_else(|| file.path(&f.stopwords)) {
        Some(p) => {
            let fh = File::open(&p).with_context(|| format!("opening stopwords {}", p.display()))?;
            load_stopwords(BufReader::new(fh)).with_context(|| format!("stopwords {}", p.display()))?
        }
        None => d.stopwords,
    };
    let idf_table = match flags.idf.clone().or_else(|| file.path(&f.idf)) {
        Some(p) => {
            let fh = File::open(&p).with_context(|| format!("opening idf table {}", p.display()))?;
            Some(load_idf_table(BufReader::new(fh)).with_context(|| format!("idf table {}", p.display()))?)
        }
        None => None,
    };
    Ok(ExtractorConfig {
        kind: pick(flags.kind, None, file_kind, d.kind),
        max_keywords: pick(flags.max_keywords, None, f.max_keywords, d.max_keywords),
        stopwords,
        idf_table,
        endpoint: flags
            .endpoint
            .clone()
            .or_else(|| env(keywords::ENDPOINT_ENV))
            .or_else(|| f.endpoint.clone()),
        allow_duplicates: pick(flags.allow_duplicates.then_some(true), None, f.allow_duplicates, d.allow_duplicates),
        timeout_secs: pick(None, None, f.timeout_secs, d.timeout_secs),
    })
}

#[derive(Debug, Default, Clone)]
pub struct RetrievalFlags {
    pub alpha: Option<f64>,
    pub top_k: Option<usize>,
    pub mode: Option<Mode>,
    pub mean_scores: bool,
    pub zero_keyword: Option<ZeroKeywordPolicy>,
    pub threads: Option<usize>,
}

pub fn resolve_retrieval(flags: &RetrievalFlags, file: &FileConfig) -> RetrievalConfig {
    let d = RetrievalConfig::default();
    let f = &file.retrieval;
    RetrievalConfig {
        alpha: pick(flags.alpha, None, f.alpha, d.alpha),
        top_k: pick(flags.top_k, None, f.top_k, d.top_k),
        mode: pick(flags.mode, None, f.mode, d.mode),
        mean_scores: pick(flags.mean_scores.then_some(true), None, f.mean_scores, d.mean_scores),
        zero_keyword: pick(flags.zero_keyword, None, f.zero_keyword, d.zero_keyword),
        threads: pick(flags.threads, None, f.threads, d.threads),
    }
}

pub const DEFAULT_ARENA_SEED: u64 = 0;

/// `(k_factor, seed)`.
pub fn resolve_arena(k: Option<f64>, seed: Option<u64>, file: &FileConfig) -> (f64, u64) {
    (
        pick(k, None, file.arena.k_factor, lawfuse::arena::DEFAULT_K_FACTOR),
        pick(seed, None, file.arena.seed, DEFAULT_ARENA_SEED),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown backend {other:?} (expected mock|remote)")),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct PipelineFlags {
    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub templates: Option<PathBuf>,
    pub no_self_suggestion: bool,
    pub rounds: Option<usize>,
    pub no_latency: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub templates: Option<PathBuf>,
    pub timeout_secs: u64,
    pub config: PipelineConfig,
}

pub fn resolve_pipeline(flags: &PipelineFlags, file: &FileConfig, env: Env) -> Result<PipelineSettings> {
    let f = &file.pipeline;
    let d = PipelineConfig::default();
    let file_backend = f.backend.as_deref().map(str::parse).transpose().map_err(Invalid)?;
    let settings = PipelineSettings {
        backend: pick(flags.backend, None, file_backend, BackendKind::Mock),
        endpoint: flags
            .endpoint
            .clone()
            .or_else(|| env(pipeline::ENDPOINT_ENV))
            .or_else(|| f.endpoint.clone()),
        templates: flags.templates.clone().or_else(|| file.path(&f.templates)),
        timeout_secs: f.timeout_secs.unwrap_or(60),
        config: PipelineConfig {
            reference: d.reference,
            self_suggestion: pick(flags.no_self_suggestion.then_some(false), None, f.self_suggestion, d.self_suggestion),
            rounds: pick(flags.rounds, None, f.rounds, d.rounds),
            record_latency: pick(flags.no_latency.then_some(false), None, f.record_latency, d.record_latency),
        },
    };
    if settings.backend == BackendKind::Remote && settings.endpoint.is_none() {
        return Err(Invalid(format!("remote backend needs --llm-endpoint or {}", pipeline::ENDPOINT_ENV)).into());
    }
    Ok(settings)
}
