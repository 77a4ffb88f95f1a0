//! Query → keyword set, via a remote LLM extractor or a lexical fallback.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{word_tokens, EmbedError, Embedder};
use crate::fusion::KeywordEmbeddings;
use crate::http::{HttpError, JsonClient};
use crate::Scalar;

/// Environment variable that overrides the remote extractor endpoint.
pub const ENDPOINT_ENV: &str = "LAWFUSE_EXTRACT_ENDPOINT";

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("keyword extractor unavailable (retryable): {0}")]
    Retryable(String),
    #[error("keyword extractor protocol error: {0}")]
    Protocol(String),
    #[error("invalid extractor configuration: {0}")]
    Config(String),
    #[error("embedding keyword {keyword:?}: {source}")]
    Embedding {
        keyword: String,
        #[source]
        source: EmbedError,
    },
    #[error("line {line}: {reason}")]
    TableFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered, non-empty keyword list. Deduplicated unless the extractor was
/// configured to keep duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordSet {
    keywords: Vec<String>,
}

impl KeywordSet {
    pub fn new(keywords: Vec<String>) -> Result<Self, KeywordError> {
        if keywords.is_empty() {
            return Err(KeywordError::InvalidInput("keyword set is empty".into()));
        }
        if keywords.iter().any(|k| k.trim().is_empty()) {
            return Err(KeywordError::InvalidInput("keyword set contains an empty keyword".into()));
        }
        Ok(Self { keywords })
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.keywords
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.keywords.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    #[default]
    Lexical,
    Remote,
}

impl std::str::FromStr for ExtractorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(Self::Lexical),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown extractor kind {other:?} (expected lexical|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    pub max_keywords: usize,
    /// Compared against lowercased tokens.
    pub stopwords: BTreeSet<String>,
    /// Higher weight = rarer token = preferred keyword. Tokens absent from
    /// the table weigh 0.
    pub idf_table: Option<HashMap<String, f64>>,
    pub endpoint: Option<String>,
    /// Keep repeated keywords, so each repetition contributes to the score.
    pub allow_duplicates: bool,
    pub timeout_secs: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::Lexical,
            max_keywords: 8,
            stopwords: default_stopwords(),
            idf_table: None,
            endpoint: None,
            allow_duplicates: false,
            timeout_secs: 30,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), KeywordError> {
        if self.max_keywords == 0 {
            return Err(KeywordError::Config("max_keywords must be at least 1".into()));
        }
        if self.kind == ExtractorKind::Remote && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(KeywordError::Config(format!(
                "remote extractor needs an endpoint (or {ENDPOINT_ENV})"
            )));
        }
        if let Some((tok, w)) = self
            .idf_table
            .iter()
            .flatten()
            .find(|(_, w)| !w.is_finite())
        {
            return Err(KeywordError::Config(format!("idf weight for {tok:?} is {w}")));
        }
        Ok(())
    }
}

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "any", "are", "as", "at", "be", "by", "can", "could", "do", "does",
    "for", "from", "has", "have", "how", "i", "if", "in", "into", "is", "it", "its", "may", "me",
    "my", "of", "on", "or", "should", "that", "the", "their", "there", "this", "to", "was", "we",
    "what", "when", "where", "which", "who", "will", "with", "would", "you", "your", "的", "了",
    "吗", "呢", "是", "我", "在", "和", "与", "及", "或", "请", "问",
];

/// A small English + Chinese function-word list.
pub fn default_stopwords() -> BTreeSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// One token per line; blank lines and `#` comments are ignored.
pub fn load_stopwords<R: BufRead>(reader: R) -> Result<BTreeSet<String>, KeywordError> {
    let mut out = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.insert(t.to_lowercase());
        }
    }
    Ok(out)
}

/// A JSON object mapping token to idf weight.
pub fn load_idf_table<R: std::io::Read>(reader: R) -> Result<HashMap<String, f64>, KeywordError> {
    let table: HashMap<String, f64> = serde_json::from_reader(reader).map_err(|e| {
        KeywordError::TableFormat {
            line: e.line(),
            reason: e.to_string(),
        }
    })?;
    Ok(table.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect())
}

/// Lexical extraction: lowercase Unicode words minus stopwords, deduplicated.
/// When more than `max_keywords` survive, the highest ranked are kept (by idf
/// if a table is configured, otherwise by length) and returned in order of
/// appearance. A query with no surviving token yields itself as the single
/// keyword.
pub fn extract_lexical(query: &str, config: &ExtractorConfig) -> Result<KeywordSet, KeywordError> {
    let query = check_query(query)?;
    if config.max_keywords == 0 {
        return Err(KeywordError::Config("max_keywords must be at least 1".into()));
    }
    let mut tokens: Vec<String> = word_tokens(query)
        .filter(|t| !config.stopwords.contains(t))
        .collect();
    if !config.allow_duplicates {
        dedup_in_place(&mut tokens);
    }
    if tokens.is_empty() {
        return KeywordSet::new(vec![query.to_owned()]);
    }
    if tokens.len() > config.max_keywords {
        let mut order: Vec<usize> = (0..tokens.len()).collect();
        // Stable sort: equal ranks keep appearance order.
        match &config.idf_table {
            Some(idf) => {
                let weight = |i: usize| idf.get(&tokens[i]).copied().unwrap_or(0.0);
                order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)));
            }
            None => order.sort_by_key(|&i| std::cmp::Reverse(tokens[i].chars().count())),
        }
        order.truncate(config.max_keywords);
        order.sort_unstable();
        tokens = order.into_iter().map(|i| std::mem::take(&mut tokens[i])).collect();
    }
    KeywordSet::new(tokens)
}

fn check_query(query: &str) -> Result<&str, KeywordError> {
    let q = query.trim();
    if q.is_empty() {
        return Err(KeywordError::InvalidInput("query is empty".into()));
    }
    Ok(q)
}

fn dedup_in_place(items: &mut Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    items.retain(|t| seen.insert(t.clone()));
}

#[derive(Serialize)]
struct ExtractRequest<'a> {
    query: &'a str,
    max_keywords: usize,
}

#[derive(Deserialize)]
struct ExtractResponse {
    keywords: Vec<String>,
}

/// Extractor selected by [`ExtractorConfig::kind`].
pub struct KeywordExtractor {
    config: ExtractorConfig,
    client: Option<JsonClient>,
}

impl std::fmt::Debug for KeywordExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeywordExtractor")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl KeywordExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self, KeywordError> {
        config.validate()?;
        let client = match config.kind {
            ExtractorKind::Lexical => None,
            ExtractorKind::Remote => Some(
                JsonClient::new(
                    config.endpoint.as_deref().expect("validated"),
                    Duration::from_secs(config.timeout_secs),
                )
                .map_err(|e| KeywordError::Config(e.to_string()))?,
            ),
        };
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn extract(&self, query: &str) -> Result<KeywordSet, KeywordError> {
        match &self.client {
            None => extract_lexical(query, &self.config),
            Some(client) => self.extract_remote(client, query),
        }
    }

    /// Remote keywords are taken verbatim apart from trimming; empties are
    /// dropped, duplicates removed unless allowed, and the list capped. An
    /// empty reply falls back to the whole query.
    fn extract_remote(&self, client: &JsonClient, query: &str) -> Result<KeywordSet, KeywordError> {
        let query = check_query(query)?;
        let resp: ExtractResponse = client
            .post(&ExtractRequest {
                query,
                max_keywords: self.config.max_keywords,
            })
            .map_err(|e| match e {
                HttpError::Transport(_) => KeywordError::Retryable(e.to_string()),
                _ => KeywordError::Protocol(e.to_string()),
            })?;
        let mut keywords: Vec<String> = resp
            .keywords
            .into_iter()
            .map(|k| k.trim().to_owned())
            .filter(|k| !k.is_empty())
            .collect();
        if !self.config.allow_duplicates {
            dedup_in_place(&mut keywords);
        }
        keywords.truncate(self.config.max_keywords);
        if keywords.is_empty() {
            keywords.push(query.to_owned());
        }
        KeywordSet::new(keywords)
    }
}

pub fn extract_keywords(query: &str, config: &ExtractorConfig) -> Result<KeywordSet, KeywordError> {
    KeywordExtractor::new(config.clone())?.extract(query)
}

/// Embeds every keyword in order. Zero vectors are kept; fusion decides what
/// to do with them.
pub fn embed_keywords<T: Scalar, E: Embedder + ?Sized>(
    keywords: &KeywordSet,
    embedder: &E,
) -> Result<KeywordEmbeddings<T>, KeywordError> {
    let texts: Vec<&str> = keywords.iter().map(String::as_str).collect();
    let vectors = embedder.embed_batch(&texts).map_err(|source| {
        let keyword = match &source {
            EmbedError::InvalidInput { index: Some(i), .. } => texts[*i].to_owned(),
            _ => texts.join(", "),
        };
        KeywordError::Embedding { keyword, source }
    })?;
    Ok(KeywordEmbeddings::new(
        vectors.iter().map(|v| v.cast()).collect(),
        keywords.as_slice().to_vec(),
    ))
}
