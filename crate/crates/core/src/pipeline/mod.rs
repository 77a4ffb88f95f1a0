//! Consult → reference → draft → self-suggestion answer flow.

mod backend;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Mode, RetrieveError, Retriever, ScoredHit};
use crate::Scalar;

pub use backend::{mock_backend, BackendError, LlmBackend, MockBackend, RemoteBackend, ENDPOINT_ENV};
pub use template::{render_prompt, template_slots, PromptTemplates, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "consult")]
    Consult,
    #[serde(rename = "reference")]
    Reference,
    #[serde(rename = "draft")]
    Draft,
    #[serde(rename = "self-suggestion")]
    SelfSuggestion,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Consult => "consult",
            Stage::Reference => "reference",
            Stage::Draft => "draft",
            Stage::SelfSuggestion => "self-suggestion",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("consult: {0}")]
    InvalidInput(String),
    #[error("stage {stage}: {source}")]
    Retrieval {
        stage: Stage,
        #[source]
        source: RetrieveError,
    },
    #[error("stage {stage}: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error("configuration error: {0}")]
    Template(#[from] TemplateError),
}

impl PipelineError {
    /// Stage the failure happened in; template errors have none.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::InvalidInput(_) => Some(Stage::Consult),
            PipelineError::Retrieval { stage, .. } | PipelineError::Backend { stage, .. } => Some(*stage),
            PipelineError::Template(_) => None,
        }
    }
}

/// A user question plus per-request overrides of the pipeline defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsultRequest {
    pub query: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub reference: Option<bool>,
    #[serde(default)]
    pub self_suggestion: Option<bool>,
    #[serde(default)]
    pub rounds: Option<usize>,
}

impl ConsultRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self { query: query.into(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub reference: bool,
    pub self_suggestion: bool,
    /// Critique-and-revise round trips when self-suggestion is on.
    pub rounds: usize,
    /// Off makes traces byte-identical across runs.
    pub record_latency: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { reference: true, self_suggestion: true, rounds: 1, record_latency: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceBundle<T = f64> {
    pub hits: Vec<ScoredHit<T>>,
    pub statute_texts: Vec<String>,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub prompt: String,
    pub reply: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResponse<T = f64> {
    pub answer: String,
    pub reference: Option<ReferenceBundle<T>>,
    pub trace: Vec<TraceEntry>,
}

impl<T> PipelineResponse<T> {
    pub fn stages(&self) -> Vec<Stage> {
        self.trace.iter().map(|e| e.stage).collect()
    }

    /// The trace as pretty JSON, one object per stage.
    pub fn trace_json(&self) -> String {
        serde_json::to_string_pretty(&self.trace).expect("trace serializes")
    }
}

/// Trim and collapse runs of whitespace to one space.
pub fn normalize_query(query: &str) -> String {
    query.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Numbered statute block for the `{statutes}` slot, or `sentinel` when
/// nothing was retrieved.
pub fn render_statutes<T: Scalar>(bundle: &ReferenceBundle<T>, titles: &[&str], sentinel: &str) -> String {
    if bundle.hits.is_empty() {
        return sentinel.to_owned();
    }
    let mut out = String::new();
    for (i, (hit, text)) in bundle.hits.iter().zip(&bundle.statute_texts).enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        match titles.get(i).filter(|t| !t.is_empty()) {
            Some(title) => out.push_str(&format!("[{}] {} ({})\n{}", hit.rank, hit.statute_id, title, text)),
            None => out.push_str(&format!("[{}] {}\n{}", hit.rank, hit.statute_id, text)),
        }
    }
    out
}

struct Recorder {
    trace: Vec<TraceEntry>,
    record_latency: bool,
}

impl Recorder {
    fn push(&mut self, stage: Stage, prompt: String, reply: String, started: Instant) {
        let latency_us = self.record_latency.then(|| started.elapsed().as_micros() as u64);
        self.trace.push(TraceEntry { stage, prompt, reply, latency_us });
    }
}

fn call(backend: &dyn LlmBackend, stage: Stage, prompt: &str) -> Result<String, PipelineError> {
    backend.complete(prompt).map_err(|source| PipelineError::Backend { stage, source })
}

/// Runs one request end to end. Stages run strictly in order; every
/// enabled stage leaves one trace entry.
pub fn run_pipeline<T: Scalar>(
    req: &ConsultRequest,
    retriever: &Retriever<T>,
    backend: &dyn LlmBackend,
    templates: &PromptTemplates,
    config: &PipelineConfig,
) -> Result<PipelineResponse<T>, PipelineError> {
    templates.validate()?;
    let mut rec = Recorder { trace: Vec::new(), record_latency: config.record_latency };

    let started = Instant::now();
    let query = normalize_query(&req.query);
    if query.is_empty() {
        return Err(PipelineError::InvalidInput("query is empty".into()));
    }
    rec.push(Stage::Consult, req.query.clone(), query.clone(), started);

    let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
    bindings.insert("query", query.clone());

    let reference = if req.reference.unwrap_or(config.reference) {
        let started = Instant::now();
        let mut cfg = retriever.config().clone();
        if let Some(alpha) = req.alpha {
            cfg.alpha = alpha;
        }
        if let Some(k) = req.top_k {
            cfg.top_k = k;
        }
        if let Some(mode) = req.mode {
            cfg.mode = mode;
        }
        let retrieval = retriever
            .retrieve_with(&query, &cfg)
            .map_err(|source| PipelineError::Retrieval { stage: Stage::Reference, source })?;
        let corpus = retriever.corpus();
        let records: Vec<_> = retrieval.hits.iter().map(|h| &corpus.records()[h.row]).collect();
        let bundle = ReferenceBundle {
            statute_texts: records.iter().map(|r| r.text.clone()).collect(),
            keywords: retrieval.keywords,
            hits: retrieval.hits,
        };
        let titles: Vec<&str> = records.iter().map(|r| r.title.as_str()).collect();
        bindings.insert("keywords", bundle.keywords.join(", "));
        bindings.insert("statutes", render_statutes(&bundle, &titles, &templates.no_statutes));
        let prompt = render_prompt(&templates.answer, &bindings)?;
        let summary = bundle
            .hits
            .iter()
            .map(|h| format!("{}. {} score={:.6}", h.rank, h.statute_id, h.score))
            .collect::<Vec<_>>()
            .join("\n");
        rec.push(Stage::Reference, prompt, summary, started);
        Some(bundle)
    } else {
        bindings.insert("keywords", String::new());
        bindings.insert("statutes", templates.no_statutes.clone());
        None
    };

    let started = Instant::now();
    let prompt = render_prompt(&templates.answer, &bindings)?;
    let mut answer = call(backend, Stage::Draft, &prompt)?;
    rec.push(Stage::Draft, prompt, answer.clone(), started);

    if req.self_suggestion.unwrap_or(config.self_suggestion) {
        for _ in 0..req.rounds.unwrap_or(config.rounds) {
            let started = Instant::now();
            bindings.insert("draft", answer);
            let prompt = render_prompt(&templates.critique, &bindings)?;
            answer = call(backend, Stage::SelfSuggestion, &prompt)?;
            rec.push(Stage::SelfSuggestion, prompt, answer.clone(), started);
        }
    }

    Ok(PipelineResponse { answer, reference, trace: rec.trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_trims_and_collapses() {
        assert_eq!(normalize_query("  statute of\t\tlimitations \n debt "), "statute of limitations debt");
        assert_eq!(normalize_query(" \n "), "");
    }

    #[test]
    fn empty_bundle_renders_sentinel() {
        let bundle: ReferenceBundle<f64> = ReferenceBundle { hits: vec![], statute_texts: vec![], keywords: vec![] };
        let t = PromptTemplates::default();
        assert_eq!(render_statutes(&bundle, &[], &t.no_statutes), "No relevant statute found.");
        let mut b = BTreeMap::new();
        b.insert("query", "q".to_string());
        b.insert("keywords", String::new());
        b.insert("statutes", render_statutes(&bundle, &[], &t.no_statutes));
        assert!(render_prompt(&t.answer, &b).unwrap().contains("No relevant statute found."));
    }

    #[test]
    fn stage_names() {
        let names: Vec<_> = [Stage::Consult, Stage::Reference, Stage::Draft, Stage::SelfSuggestion]
            .iter()
            .map(|s| serde_json::to_value(s).unwrap())
            .collect();
        assert_eq!(names, ["consult", "reference", "draft", "self-suggestion"]);
    }
}
