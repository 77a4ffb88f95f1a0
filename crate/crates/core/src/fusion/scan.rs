use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;

use super::{
    clamp_unit, fuse, FusionError, KeywordEmbeddings, LawMatrix, Mode, QueryEmbedding,
    RetrievalConfig, ScoreVector, ScoredHit, ZeroKeywordPolicy,
};
use crate::scalar::{dot, l2_norm};
use crate::store::StatuteCorpus;
use crate::Scalar;

/// Rows handed to a worker at a time in the parallel scan.
const ROWS_PER_TASK: usize = 512;

/// Scoring directions resolved once per query: each entry is a direction and
/// its norm, in keyword order.
pub(crate) struct Directions<T> {
    dirs: Vec<(Vec<T>, T)>,
    divisor: T,
    mode_used: Mode,
    skipped: Vec<usize>,
}

impl<T: Scalar> Directions<T> {
    pub(crate) fn prepare(
        keywords: &KeywordEmbeddings<T>,
        query: &QueryEmbedding<T>,
        matrix: &LawMatrix<T>,
        cfg: &RetrievalConfig,
    ) -> Result<Self, FusionError> {
        cfg.validate()?;
        let dim = matrix.dim();
        if query.dim() != dim {
            return Err(FusionError::DimensionMismatch {
                what: "query embedding".into(),
                expected: dim,
                found: query.dim(),
            });
        }
        let s = query.vector().values();
        let alpha = T::from_f64_lossy(cfg.alpha);

        let mut dirs = Vec::new();
        let mut skipped = Vec::new();
        let mut mode_used = cfg.mode;

        if cfg.mode == Mode::Fusion {
            if keywords.is_empty() {
                return Err(FusionError::InvalidInput(
                    "fusion mode needs at least one keyword".into(),
                ));
            }
            for (i, (k, name)) in keywords.vectors().iter().zip(keywords.keywords()).enumerate() {
                if k.dim() != dim {
                    return Err(FusionError::DimensionMismatch {
                        what: format!("keyword {name:?}"),
                        expected: dim,
                        found: k.dim(),
                    });
                }
                if k.is_zero() {
                    if cfg.zero_keyword == ZeroKeywordPolicy::Error {
                        return Err(FusionError::ZeroNorm(format!("keyword {name:?} embedding")));
                    }
                    warn!("skipping keyword {name:?}: zero-norm embedding");
                    skipped.push(i);
                    continue;
                }
                let v = fuse(k.values(), s, alpha)?.into_values();
                let nv = l2_norm(&v);
                if nv.is_zero() {
                    warn!("skipping keyword {name:?}: fused direction cancels to zero");
                    skipped.push(i);
                    continue;
                }
                dirs.push((v, nv));
            }
            if dirs.is_empty() {
                warn!("no usable keyword directions; falling back to query-only scoring");
                mode_used = Mode::QueryOnly;
            }
        }

        if mode_used == Mode::QueryOnly {
            let ns = l2_norm(s);
            if ns.is_zero() {
                return Err(FusionError::InvalidInput("zero-norm query embedding".into()));
            }
            dirs.push((s.to_vec(), ns));
        }

        let divisor = if cfg.mean_scores {
            T::from_usize(dirs.len()).expect("direction count fits")
        } else {
            T::one()
        };
        Ok(Self {
            dirs,
            divisor,
            mode_used,
            skipped,
        })
    }

    #[inline]
    fn score_row(&self, row: &[T], row_norm: T) -> T {
        let mut acc = T::zero();
        for (v, nv) in &self.dirs {
            acc = acc + clamp_unit(dot(v, row) / (*nv * row_norm));
        }
        acc / self.divisor
    }

    fn fill(&self, matrix: &LawMatrix<T>, first_row: usize, out: &mut [T]) {
        for (offset, slot) in out.iter_mut().enumerate() {
            let j = first_row + offset;
            *slot = self.score_row(matrix.row(j), matrix.norm(j));
        }
    }

    pub(crate) fn scan_serial(self, matrix: &LawMatrix<T>) -> ScoreVector<T> {
        let mut scores = vec![T::zero(); matrix.len()];
        self.fill(matrix, 0, &mut scores);
        self.finish(scores)
    }

    pub(crate) fn scan_in_pool(self, matrix: &LawMatrix<T>, pool: &rayon::ThreadPool) -> ScoreVector<T> {
        let mut scores = vec![T::zero(); matrix.len()];
        pool.install(|| {
            scores
                .par_chunks_mut(ROWS_PER_TASK)
                .enumerate()
                .for_each(|(chunk, out)| self.fill(matrix, chunk * ROWS_PER_TASK, out));
        });
        self.finish(scores)
    }

    fn finish(self, scores: Vec<T>) -> ScoreVector<T> {
        ScoreVector {
            scores,
            mode_used: self.mode_used,
            skipped_keywords: self.skipped,
        }
    }
}

/// Serial scan: `scores[j] = Σ_i cos(v_i, l_j)` in fusion mode, or
/// `cos(s, l_j)` in query-only mode.
pub fn score_corpus<T: Scalar>(
    keywords: &KeywordEmbeddings<T>,
    query: &QueryEmbedding<T>,
    matrix: &LawMatrix<T>,
    cfg: &RetrievalConfig,
) -> Result<ScoreVector<T>, FusionError> {
    Ok(Directions::prepare(keywords, query, matrix, cfg)?.scan_serial(matrix))
}

pub(crate) fn build_pool(threads: usize) -> Result<rayon::ThreadPool, FusionError> {
    if threads == 0 {
        return Err(FusionError::InvalidInput("threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .thread_name(|i| format!("lawfuse-scan-{i}"))
        .build()
        .map_err(|e| FusionError::InvalidInput(format!("thread pool: {e}")))
}

/// Same result as [`score_corpus`], split across `threads` workers by row.
/// Each row is still summed by one worker in keyword order, so every entry is
/// bitwise equal to the serial scan.
pub fn scan_parallel<T: Scalar>(
    keywords: &KeywordEmbeddings<T>,
    query: &QueryEmbedding<T>,
    matrix: &LawMatrix<T>,
    cfg: &RetrievalConfig,
    threads: usize,
) -> Result<ScoreVector<T>, FusionError> {
    let pool = build_pool(threads)?;
    Ok(Directions::prepare(keywords, query, matrix, cfg)?.scan_in_pool(matrix, &pool))
}

/// Score descending, then corpus position ascending.
fn rank_order<T: Scalar>(scores: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// The `min(k, M)` best rows, ranked from 1.
pub fn top_k<T: Scalar>(
    scores: &ScoreVector<T>,
    k: usize,
    corpus: &StatuteCorpus,
) -> Result<Vec<ScoredHit<T>>, FusionError> {
    if k == 0 {
        return Err(FusionError::InvalidInput("k must be at least 1".into()));
    }
    if scores.len() != corpus.len() {
        return Err(FusionError::DimensionMismatch {
            what: "score vector vs corpus".into(),
            expected: corpus.len(),
            found: scores.len(),
        });
    }
    if let Some(j) = scores.scores.iter().position(|s| !s.is_finite()) {
        return Err(FusionError::InvalidInput(format!("score of row {j} is not finite")));
    }
    let order = rank_order(&scores.scores);
    let mut rows: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(rows.len());
    if k < rows.len() && k > 0 {
        rows.select_nth_unstable_by(k - 1, &order);
        rows.truncate(k);
    }
    rows.sort_unstable_by(&order);
    let records = corpus.records();
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| ScoredHit {
            rank: i + 1,
            statute_id: records[row].id.clone(),
            row,
            score: scores.scores[row],
        })
        .collect())
}
