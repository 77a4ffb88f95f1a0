mod config;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lawfuse::arena::{self, ArenaError};
use lawfuse::embedding::{EmbedError, EmbedderConfig, EmbedderKind};
use lawfuse::fusion::{self, FusionError, Mode, RetrieveError, Retriever, ZeroKeywordPolicy};
use lawfuse::keywords::{ExtractorKind, KeywordError, KeywordExtractor};
use lawfuse::pipeline::{
    run_pipeline, BackendError, ConsultRequest, LlmBackend, MockBackend, PipelineError, PromptTemplates,
    RemoteBackend, TemplateError,
};
use lawfuse::store::{self, StatuteCorpus, StoreError};

use config::{BackendKind, EmbedderFlags, ExtractorFlags, FileConfig, PipelineFlags, RetrievalFlags};

/// A usage or validation failure (exit code 1) that has no typed source.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(name = "lawfuse", version, about = "Keyword-fused statute retrieval, exam grading and Elo arena")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Line-delimited JSON records on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every stochastic component (reference embedder, arena schedule).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output on stderr (-v info, -vv debug). RUST_LOG wins if set.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a JSONL statute file and write a corpus snapshot.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every statute and write an index snapshot plus its manifest.
    BuildIndex {
        /// Corpus snapshot or raw JSONL statute file.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Rank statutes for a question.
    Query {
        #[arg(long)]
        idx: PathBuf,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        extractor: ExtractorArgs,
        /// Overrides the embedding endpoint recorded in the index manifest.
        #[arg(long)]
        embed_endpoint: Option<String>,
        question: String,
    },
    /// Grade answer sheets against an exam.
    EvalExam {
        #[arg(long)]
        exam: PathBuf,
        #[arg(required = true)]
        sheets: Vec<PathBuf>,
    },
    /// Pairwise Elo tournament over answer sheets.
    Arena {
        #[arg(long)]
        exam: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        sheets: Vec<PathBuf>,
        /// Elo K-factor.
        #[arg(long)]
        k: Option<f64>,
        /// Writes ratings.txt, winrate.csv and battles.jsonl here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Consult, reference, draft and self-suggestion over an LLM backend.
    Pipeline {
        #[arg(long)]
        idx: PathBuf,
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long)]
        llm_endpoint: Option<String>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        no_self_suggestion: bool,
        #[arg(long)]
        rounds: Option<usize>,
        /// Write the per-stage trace as JSON.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Leave latency out of the trace so reruns are byte-identical.
        #[arg(long)]
        no_latency: bool,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[command(flatten)]
        extractor: ExtractorArgs,
        #[arg(long)]
        embed_endpoint: Option<String>,
        question: String,
    },
}

#[derive(Args, Debug)]
struct EmbedderArgs {
    #[arg(long)]
    embedder: Option<EmbedderKind>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// Vector sidecar for the file embedder.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RetrievalArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Average keyword scores instead of summing them.
    #[arg(long)]
    mean_scores: bool,
    /// skip | error
    #[arg(long, value_parser = parse_zero_keyword)]
    zero_keyword: Option<ZeroKeywordPolicy>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ExtractorArgs {
    #[arg(long)]
    extractor: Option<ExtractorKind>,
    #[arg(long)]
    extract_endpoint: Option<String>,
    #[arg(long)]
    max_keywords: Option<usize>,
    /// One stopword per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// JSON object of token -> idf weight.
    #[arg(long)]
    idf: Option<PathBuf>,
    #[arg(long)]
    allow_duplicate_keywords: bool,
}

fn parse_zero_keyword(s: &str) -> Result<ZeroKeywordPolicy, String> {
    match s {
        "skip" => Ok(ZeroKeywordPolicy::Skip),
        "error" => Ok(ZeroKeywordPolicy::Error),
        other => Err(format!("unknown policy {other:?} (expected skip|error)")),
    }
}

impl RetrievalArgs {
    fn flags(&self) -> RetrievalFlags {
        RetrievalFlags {
            alpha: self.alpha,
            top_k: self.top_k,
            mode: self.mode,
            mean_scores: self.mean_scores,
            zero_keyword: self.zero_keyword,
            threads: self.threads,
        }
    }
}

impl ExtractorArgs {
    fn flags(&self) -> ExtractorFlags {
        ExtractorFlags {
            kind: self.extractor,
            max_keywords: self.max_keywords,
            stopwords: self.stopwords.clone(),
            idf: self.idf.clone(),
            endpoint: self.extract_endpoint.clone(),
            allow_duplicates: self.allow_duplicate_keywords,
        }
    }
}

/// Written next to an index as `<index>.meta.json`: what a later query needs
/// to reopen the corpus and rebuild the same embedder.
#[derive(Debug, Serialize, Deserialize)]
struct IndexManifest {
    corpus: PathBuf,
    embedder: EmbedderConfig,
    fingerprint: String,
    rows: usize,
    dim: usize,
}

fn manifest_path(index: &Path) -> PathBuf {
    let mut name = index.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for bad input or configuration, 2 for everything that went wrong
/// while doing the work (I/O, network, backend).
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<TemplateError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<StoreError>() {
            return if matches!(e, StoreError::Io(_)) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<ArenaError>() {
            return if matches!(e, ArenaError::Io(_)) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<EmbedError>() {
            return if matches!(e, EmbedError::Config(_) | EmbedError::InvalidInput { .. }) { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<KeywordError>() {
            return match e {
                KeywordError::Config(_) | KeywordError::InvalidInput(_) | KeywordError::TableFormat { .. } => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<RetrieveError>() {
            return if e.is_invalid_input() { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<FusionError>() {
            return match e {
                FusionError::Io(_) | FusionError::Embedding { .. } => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::InvalidInput(_) | PipelineError::Template(_) => 1,
                PipelineError::Retrieval { source, .. } => if source.is_invalid_input() { 1 } else { 2 },
                PipelineError::Backend { source, .. } => {
                    if matches!(source, BackendError::InvalidInput(_)) { 1 } else { 2 }
                }
            };
        }
        if cause.is::<serde_json::Error>() {
            return 1;
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let env = config::process_env;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());

    match &cli.command {
        Command::Ingest { input, out: dest } => {
            let fh = File::open(input).with_context(|| format!("opening {}", input.display()))?;
            let corpus = store::ingest_corpus(BufReader::new(fh)).with_context(|| format!("ingesting {}", input.display()))?;
            let w = File::create(dest).with_context(|| format!("creating {}", dest.display()))?;
            let mut w = BufWriter::new(w);
            store::save_corpus(&corpus, &mut w)?;
            w.flush()?;
            info!("ingested {} statutes", corpus.len());
            if cli.json {
                writeln!(out, "{}", json!({"records": corpus.len(), "out": dest}))?;
            } else {
                writeln!(out, "{} statutes -> {}", corpus.len(), dest.display())?;
            }
        }

        Command::BuildIndex { corpus: corpus_path, out: dest, embedder } => {
            let corpus = read_corpus(corpus_path)?;
            let flags = EmbedderFlags {
                kind: embedder.embedder,
                dim: embedder.dim,
                seed: cli.seed,
                endpoint: embedder.embed_endpoint.clone(),
                sidecar: embedder.sidecar.clone(),
            };
            let ecfg = config::resolve_embedder(&flags, &file, &env);
            let backend = ecfg.build().context("embedder configuration")?;
            info!("embedding {} statutes with {}", corpus.len(), backend.fingerprint());
            let matrix = fusion::build_index::<f64, _>(&corpus, backend.as_ref())?;
            let mut w = BufWriter::new(File::create(dest).with_context(|| format!("creating {}", dest.display()))?);
            fusion::save_index(&matrix, &mut w)?;
            w.flush()?;

            let manifest = IndexManifest {
                corpus: std::fs::canonicalize(corpus_path)?,
                embedder: ecfg,
                fingerprint: matrix.fingerprint_hex(),
                rows: matrix.len(),
                dim: matrix.dim(),
            };
            let mpath = manifest_path(dest);
            std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")
                .with_context(|| format!("writing {}", mpath.display()))?;
            if cli.json {
                writeln!(
                    out,
                    "{}",
                    json!({"rows": matrix.len(), "dim": matrix.dim(), "fingerprint": manifest.fingerprint,
                           "index": dest, "manifest": mpath})
                )?;
            } else {
                writeln!(out, "{} rows x {} dims -> {}", matrix.len(), matrix.dim(), dest.display())?;
            }
        }

        Command::Query { idx, retrieval, extractor, embed_endpoint, question } => {
            let retriever = open_retriever(idx, retrieval, extractor, embed_endpoint, cli.seed, &file)?;
            let result = retriever.retrieve(question)?;
            for kw in &result.skipped_keywords {
                warn!("keyword {kw:?} embeds to the zero vector; skipped");
            }
            if !cli.json {
                writeln!(out, "# mode {}; keywords: {}", result.mode_used, result.keywords.join(", "))?;
            }
            for hit in &result.hits {
                let title = &retriever.corpus().records()[hit.row].title;
                if cli.json {
                    writeln!(
                        out,
                        "{}",
                        json!({"rank": hit.rank, "statute_id": hit.statute_id, "row": hit.row,
                               "score": hit.score, "title": title, "mode": result.mode_used,
                               "keywords": result.keywords})
                    )?;
                } else {
                    writeln!(out, "{}\t{}\t{:.6}\t{}", hit.rank, hit.statute_id, hit.score, title)?;
                }
            }
        }

        Command::EvalExam { exam, sheets } => {
            let exam = read_exam(exam)?;
            for path in sheets {
                let sheet = read_sheet(path, &exam)?;
                let report = arena::grade(&sheet, &exam)?;
                if cli.json {
                    writeln!(out, "{}", serde_json::to_string(&report)?)?;
                } else {
                    writeln!(out, "{}\t{}/{}\t{:.4}", report.model, report.correct, report.total, report.accuracy)?;
                }
            }
        }

        Command::Arena { exam, sheets, k, out_dir } => {
            let exam = read_exam(exam)?;
            let sheets = sheets.iter().map(|p| read_sheet(p, &exam)).collect::<Result<Vec<_>>>()?;
            let (k, seed) = config::resolve_arena(*k, cli.seed, &file);
            let t = arena::run_tournament::<f64>(&sheets, &exam, seed, k)?;
            let mut ranked = t.ratings.clone();
            ranked.sort_by(|a, b| b.rating.total_cmp(&a.rating).then_with(|| a.model_name.cmp(&b.model_name)));
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                std::fs::write(dir.join("ratings.txt"), arena::export_ratings(&ranked))?;
                std::fs::write(dir.join("winrate.csv"), arena::export_matrix(&t.matrix))?;
                let mut log = BufWriter::new(File::create(dir.join("battles.jsonl"))?);
                for rec in &t.log {
                    serde_json::to_writer(&mut log, rec)?;
                    log.write_all(b"\n")?;
                }
                log.flush()?;
                info!("wrote {} battles to {}", t.log.len(), dir.display());
            }
            if cli.json {
                write!(out, "{}", arena::export_ratings_records(&ranked))?;
            } else {
                write!(out, "{}", arena::export_ratings(&ranked))?;
            }
        }

        Command::Pipeline {
            idx,
            backend,
            llm_endpoint,
            templates,
            no_self_suggestion,
            rounds,
            trace_out,
            no_latency,
            retrieval,
            extractor,
            embed_endpoint,
            question,
        } => {
            let pflags = PipelineFlags {
                backend: *backend,
                endpoint: llm_endpoint.clone(),
                templates: templates.clone(),
                no_self_suggestion: *no_self_suggestion,
                rounds: *rounds,
                no_latency: *no_latency,
            };
            let settings = config::resolve_pipeline(&pflags, &file, &env)?;
            let templates = match &settings.templates {
                Some(dir) => PromptTemplates::load_dir(dir)?,
                None => PromptTemplates::default(),
            };
            let llm: Box<dyn LlmBackend> = match settings.backend {
                BackendKind::Mock => Box::new(MockBackend::default()),
                BackendKind::Remote => Box::new(RemoteBackend::new(
                    settings.endpoint.as_deref().expect("checked by resolve_pipeline"),
                    Duration::from_secs(settings.timeout_secs),
                )?),
            };
            let retriever = open_retriever(idx, retrieval, extractor, embed_endpoint, cli.seed, &file)?;
            let req = ConsultRequest::new(question.clone());
            let resp = run_pipeline(&req, &retriever, llm.as_ref(), &templates, &settings.config)?;
            if let Some(path) = trace_out {
                std::fs::write(path, resp.trace_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            if cli.json {
                let hits: Vec<&str> = resp.reference.iter().flat_map(|r| &r.hits).map(|h| h.statute_id.as_str()).collect();
                writeln!(out, "{}", json!({"answer": resp.answer, "stages": resp.stages(), "hits": hits}))?;
            } else {
                writeln!(out, "{}", resp.answer)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn open_retriever(
    idx: &Path,
    retrieval: &RetrievalArgs,
    extractor: &ExtractorArgs,
    embed_endpoint: &Option<String>,
    seed: Option<u64>,
    file: &FileConfig,
) -> Result<Retriever<f64>> {
    let mpath = manifest_path(idx);
    let manifest: IndexManifest = serde_json::from_str(
        &std::fs::read_to_string(&mpath).with_context(|| format!("reading index manifest {}", mpath.display()))?,
    )
    .with_context(|| format!("index manifest {}", mpath.display()))?;
    let mut ecfg = manifest.embedder;
    if let Some(seed) = seed.filter(|s| *s != ecfg.seed) {
        return Err(Invalid(format!("index was built with seed {}, not {seed}", ecfg.seed)).into());
    }
    if let Some(ep) = embed_endpoint.clone().or_else(|| config::process_env(lawfuse::embedding::ENDPOINT_ENV)) {
        ecfg.endpoint = Some(ep);
    }
    let corpus = read_corpus(&manifest.corpus)?;
    let fh = File::open(idx).with_context(|| format!("opening index {}", idx.display()))?;
    let matrix = fusion::load_index::<f64, _>(BufReader::new(fh), &corpus)
        .with_context(|| format!("loading index {}", idx.display()))?;
    let rcfg = config::resolve_retrieval(&retrieval.flags(), file);
    let xcfg = config::resolve_extractor(&extractor.flags(), file, &config::process_env)?;
    let embedder = ecfg.build().context("embedder configuration")?;
    let extractor = KeywordExtractor::new(xcfg)?;
    Ok(Retriever::new(Arc::new(corpus), matrix, embedder, extractor, rcfg)?)
}

/// Accepts either a corpus snapshot or a raw JSONL statute file.
fn read_corpus(path: &Path) -> Result<StatuteCorpus> {
    let fh = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    let mut reader = BufReader::new(fh);
    let is_snapshot = {
        let buf = reader.fill_buf()?;
        let first = buf.split(|b| *b == b'\n').next().unwrap_or_default();
        serde_json::from_slice::<serde_json::Value>(first)
            .ok()
            .and_then(|v| v.get("format").and_then(|f| f.as_str().map(|s| s == "lawfuse-corpus")))
            .unwrap_or(false)
    };
    let corpus = if is_snapshot { store::load_corpus(reader) } else { store::ingest_corpus(reader) };
    corpus.with_context(|| format!("corpus {}", path.display()))
}

fn read_exam(path: &Path) -> Result<arena::Exam> {
    let fh = File::open(path).with_context(|| format!("opening exam {}", path.display()))?;
    arena::load_exam(BufReader::new(fh)).with_context(|| format!("exam {}", path.display()))
}

fn read_sheet(path: &Path, exam: &arena::Exam) -> Result<arena::AnswerSheet> {
    let fh = File::open(path).with_context(|| format!("opening answer sheet {}", path.display()))?;
    arena::load_sheet(BufReader::new(fh), exam).with_context(|| format!("answer sheet {}", path.display()))
}
