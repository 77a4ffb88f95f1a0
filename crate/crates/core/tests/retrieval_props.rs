mod common;

use common::{corpus_of, engine_inputs, oracle_query_only, oracle_ranking, oracle_scores, Instance};
use lawfuse::fusion::{scan_parallel, score_corpus, top_k, Mode, RetrievalConfig};
use proptest::prelude::*;

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    // Keep clear of vectors too short to normalize meaningfully.
    proptest::collection::vec(-10.0f64..10.0, d).prop_filter("non-degenerate", |v| {
        v.iter().map(|x| x * x).sum::<f64>() > 1e-6
    })
}

fn instance_strategy() -> impl Strategy<Value = Instance> {
    (prop_oneof![Just(4usize), Just(8), Just(16), Just(64)], 1usize..60, 1usize..8, 0.0f64..2.0).prop_flat_map(
        |(d, m, n, alpha)| {
            (
                proptest::collection::vec(vec_strategy(d), m),
                proptest::collection::vec(vec_strategy(d), n),
                vec_strategy(d),
            )
                .prop_map(move |(laws, keywords, query)| Instance { laws, keywords, query, alpha })
        },
    )
}

fn cfg(alpha: f64, mode: Mode) -> RetrievalConfig {
    RetrievalConfig { alpha, mode, top_k: 10, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_matches_oracle(inst in instance_strategy()) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let sv = score_corpus(&ke, &q, &m, &cfg(inst.alpha, Mode::Fusion)).unwrap();
        let expect = oracle_scores(&inst);
        for (got, want) in sv.scores.iter().zip(&expect) {
            prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
        let hits = top_k(&sv, 10, &corpus).unwrap();
        let rows: Vec<usize> = hits.iter().map(|h| h.row).collect();
        prop_assert_eq!(rows, oracle_ranking(&expect, 10));
    }

    #[test]
    fn query_only_matches_oracle(inst in instance_strategy()) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let sv = score_corpus(&ke, &q, &m, &cfg(inst.alpha, Mode::QueryOnly)).unwrap();
        for (got, want) in sv.scores.iter().zip(oracle_query_only(&inst)) {
            prop_assert!((got - want).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(got));
        }
    }

    #[test]
    fn keyword_permutation_invariance(inst in instance_strategy(), shift in 0usize..8) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let base = score_corpus(&ke, &q, &m, &cfg(inst.alpha, Mode::Fusion)).unwrap();
        let mut rotated = inst.clone();
        let n = rotated.keywords.len();
        rotated.keywords.rotate_left(shift % n);
        rotated.keywords.reverse();
        let (ke2, _, _) = engine_inputs(&rotated, &corpus);
        let perm = score_corpus(&ke2, &q, &m, &cfg(inst.alpha, Mode::Fusion)).unwrap();
        for (a, b) in base.scores.iter().zip(&perm.scores) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn positive_scale_invariance(inst in instance_strategy(), c in prop_oneof![Just(1e-3), Just(0.37), Just(1.0), Just(1e3)]) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let base = score_corpus(&ke, &q, &m, &cfg(inst.alpha, Mode::Fusion)).unwrap();
        let mut scaled = inst.clone();
        for row in &mut scaled.laws {
            for x in row.iter_mut() {
                *x *= c;
            }
        }
        let (_, _, m2) = engine_inputs(&scaled, &corpus);
        let after = score_corpus(&ke, &q, &m2, &cfg(inst.alpha, Mode::Fusion)).unwrap();
        for (a, b) in base.scores.iter().zip(&after.scores) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn scores_are_bounded_by_keyword_count(inst in instance_strategy()) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let n = inst.keywords.len() as f64;
        let sv = score_corpus(&ke, &q, &m, &cfg(inst.alpha, Mode::Fusion)).unwrap();
        prop_assert!(sv.scores.iter().all(|s| (-n..=n).contains(s)));
        let mean = score_corpus(&ke, &q, &m, &RetrievalConfig { mean_scores: true, ..cfg(inst.alpha, Mode::Fusion) }).unwrap();
        for (s, avg) in sv.scores.iter().zip(&mean.scores) {
            prop_assert!((s / n - avg).abs() <= 1e-12);
        }
    }

    #[test]
    fn alpha_zero_single_keyword_is_plain_cosine(inst in instance_strategy()) {
        let mut one = inst.clone();
        one.keywords.truncate(1);
        one.alpha = 0.0;
        let corpus = corpus_of(one.laws.len());
        let (ke, q, m) = engine_inputs(&one, &corpus);
        let sv = score_corpus(&ke, &q, &m, &cfg(0.0, Mode::Fusion)).unwrap();
        let direct = Instance { query: one.keywords[0].clone(), ..one.clone() };
        for (got, want) in sv.scores.iter().zip(oracle_query_only(&direct)) {
            prop_assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn parallel_scan_is_bitwise_serial(inst in instance_strategy(), threads in 1usize..5) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let c = cfg(inst.alpha, Mode::Fusion);
        let serial = score_corpus(&ke, &q, &m, &c).unwrap();
        let par = scan_parallel(&ke, &q, &m, &c, threads).unwrap();
        prop_assert_eq!(serial.scores, par.scores);
    }

    #[test]
    fn ranking_is_deterministic(inst in instance_strategy()) {
        let corpus = corpus_of(inst.laws.len());
        let (ke, q, m) = engine_inputs(&inst, &corpus);
        let c = cfg(inst.alpha, Mode::Fusion);
        let a = top_k(&score_corpus(&ke, &q, &m, &c).unwrap(), 5, &corpus).unwrap();
        let b = top_k(&score_corpus(&ke, &q, &m, &c).unwrap(), 5, &corpus).unwrap();
        prop_assert_eq!(a.clone(), b);
        prop_assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(a.iter().enumerate().all(|(i, h)| h.rank == i + 1));
    }
}

#[test]
fn duplicate_rows_tie_break_by_position() {
    let inst = Instance {
        laws: vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        keywords: vec![vec![1.0, 0.0]],
        query: vec![1.0, 0.0],
        alpha: 1.0,
    };
    let corpus = corpus_of(4);
    let (ke, q, m) = engine_inputs(&inst, &corpus);
    let sv = score_corpus(&ke, &q, &m, &cfg(1.0, Mode::Fusion)).unwrap();
    let rows: Vec<usize> = top_k(&sv, 4, &corpus).unwrap().iter().map(|h| h.row).collect();
    assert_eq!(rows, [1, 3, 0, 2]);
    assert_eq!(rows, oracle_ranking(&oracle_scores(&inst), 4));
}
