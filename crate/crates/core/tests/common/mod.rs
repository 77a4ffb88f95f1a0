//! Test-only reference implementations. Nothing here calls into the
//! scoring engine; the point is to have a second, obviously-correct reading
//! of the retrieval rule to compare against.
#![allow(dead_code)]

use lawfuse::embedding::EmbeddingVector;
use lawfuse::fusion::{KeywordEmbeddings, LawMatrix, QueryEmbedding};
use lawfuse::{StatuteCorpus, StatuteRecord};
use rand::{Rng, RngExt};

/// One random retrieval problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub laws: Vec<Vec<f64>>,
    pub keywords: Vec<Vec<f64>>,
    pub query: Vec<f64>,
    pub alpha: f64,
}

fn naive_norm(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x * x;
    }
    s.sqrt()
}

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.len() {
        d += a[i] * b[i];
    }
    (d / (naive_norm(a) * naive_norm(b))).clamp(-1.0, 1.0)
}

/// The retrieval loop written out literally: for each keyword build
/// `k/|k| + alpha * s/|s|`, then add its cosine with every law to that law's
/// score.
#[allow(clippy::needless_range_loop)]
pub fn oracle_scores(inst: &Instance) -> Vec<f64> {
    let m = inst.laws.len();
    let mut scores = vec![0.0; m];
    let ns = naive_norm(&inst.query);
    for k in &inst.keywords {
        let nk = naive_norm(k);
        let mut v = vec![0.0; k.len()];
        for t in 0..k.len() {
            v[t] = k[t] / nk + inst.alpha * inst.query[t] / ns;
        }
        for j in 0..m {
            scores[j] += naive_cos(&v, &inst.laws[j]);
        }
    }
    scores
}

/// `cos(s, l_j)` for every law.
pub fn oracle_query_only(inst: &Instance) -> Vec<f64> {
    inst.laws.iter().map(|l| naive_cos(&inst.query, l)).collect()
}

/// Row indices by score descending, lower index first on equal scores.
pub fn oracle_ranking(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps ascending index among equal scores.
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    idx.truncate(k);
    idx
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    // Box-Muller; uniform components would also do, this just avoids
    // axis-aligned bias.
    (0..d)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

pub fn random_instance<R: Rng>(rng: &mut R, d: usize, m: usize, n: usize, alpha: f64) -> Instance {
    Instance {
        laws: (0..m).map(|_| gaussian_vec(rng, d)).collect(),
        keywords: (0..n).map(|_| gaussian_vec(rng, d)).collect(),
        query: gaussian_vec(rng, d),
        alpha,
    }
}

/// Corpus with ids `s0..s{m-1}`, aligned with the rows of an instance.
pub fn corpus_of(m: usize) -> StatuteCorpus {
    StatuteCorpus::from_records(
        (0..m)
            .map(|j| StatuteRecord {
                id: format!("s{j}"),
                title: String::new(),
                text: format!("statute number {j}"),
                tags: vec![],
            })
            .collect(),
    )
    .unwrap()
}

/// Engine-side views of an instance.
pub fn engine_inputs(inst: &Instance, corpus: &StatuteCorpus) -> (KeywordEmbeddings<f64>, QueryEmbedding<f64>, LawMatrix<f64>) {
    let d = inst.query.len();
    let ke = KeywordEmbeddings::from_vectors(
        inst.keywords.iter().map(|k| EmbeddingVector::new(k.clone()).unwrap()).collect(),
    );
    let q = QueryEmbedding::new(EmbeddingVector::new(inst.query.clone()).unwrap());
    let m = LawMatrix::from_rows(&inst.laws, d, corpus.fingerprint()).unwrap();
    (ke, q, m)
}

pub const TOY_STATUTES: &str = include_str!("../../../../data/statutes.jsonl");

pub fn toy_corpus() -> StatuteCorpus {
    lawfuse::store::ingest_corpus(TOY_STATUTES.as_bytes()).unwrap()
}

/// Retriever over the 20-statute toy corpus with the reference embedder.
pub fn toy_retriever(cfg: lawfuse::RetrievalConfig, dim: usize) -> lawfuse::Retriever64 {
    use lawfuse::embedding::ReferenceEmbedder;
    let corpus = toy_corpus();
    let embedder = ReferenceEmbedder::new(dim, 0).unwrap();
    let matrix = lawfuse::fusion::build_index::<f64, _>(&corpus, &embedder).unwrap();
    let extractor = lawfuse::keywords::KeywordExtractor::new(lawfuse::ExtractorConfig::default()).unwrap();
    lawfuse::Retriever64::new(std::sync::Arc::new(corpus), matrix, Box::new(embedder), extractor, cfg).unwrap()
}
