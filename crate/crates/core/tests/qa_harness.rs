mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanreason::example_gen::{tokenize, Vocab};
use spanreason::qa::{
    em_f1, evaluate, fewshot_sample, hotpot_combine, hybrid_compose, inputs_for, normalize_answer, predict, select_topk,
    window_split, Document, EvalConfig, EvalMode, LexicalOverlap, LinkedCell, MetricReport, QaExample, QaInput, QaTable,
    SpanModel, Window, WindowScorer,
};
use spanreason::Error;

fn golds(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_answer("An Apple, Inc."), "apple inc");
    assert_eq!(normalize_answer("paris"), "paris");
    assert_eq!(normalize_answer("The  The"), "");
}

#[test]
fn metric_examples() {
    assert_eq!(em_f1(Some("Paris"), &golds(&["Paris"])), (1.0, 1.0));
    let (em, f1) = em_f1(Some("red cat"), &golds(&["big red cat"]));
    assert_eq!(em, 0.0);
    assert!((f1 - 0.8).abs() < 1e-12);
    assert_eq!(em_f1(Some("the red cat"), &golds(&["red cat"])), (1.0, 1.0));
    // best over golds
    assert_eq!(em_f1(Some("cat"), &golds(&["dog", "cat"])), (1.0, 1.0));
    assert_eq!(em_f1(None, &golds(&["cat"])), (0.0, 0.0));
    assert_eq!(em_f1(Some("cat"), &[]), (0.0, 0.0));
    assert_eq!(em_f1(None, &[]), (1.0, 1.0));
}

#[test]
fn metric_report_means_and_rounds() {
    let r = MetricReport::from_scores(&[(1.0, 1.0), (0.0, 0.8), (0.0, 1.0 / 3.0)]);
    assert_eq!(r.n, 3);
    assert_eq!(r.em, 0.3333);
    assert_eq!(r.f1, 0.7111);
}

fn words(n: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "the", "red", "cat", "big", "dog", "Paris", "an", "x,", "y."]), 0..n)
        .prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn metric_bounds(pred in words(6), gold in prop::collection::vec(words(6), 1..3)) {
        let (em, f1) = em_f1(Some(&pred), &gold);
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert!(em == 0.0 || em == 1.0);
        prop_assert!(em <= f1);
    }

    #[test]
    fn windows_cover_and_overlap(n in 0usize..2000, stride in 1usize..300, extra in 1usize..300) {
        let window = stride + extra;
        let ws = window_split(n, window, stride).unwrap();
        let mut covered = vec![false; n];
        for w in &ws {
            prop_assert!(w.end <= n && w.end - w.start <= window);
            covered[w.clone()].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.iter().all(|&c| c));
        for pair in ws.windows(2) {
            prop_assert_eq!(pair[1].start, pair[0].start + stride);
            if pair[1].end < n {
                prop_assert_eq!(pair[0].end - pair[1].start, window - stride);
            }
        }
        prop_assert_eq!(ws.last().map_or(0, |w| w.end), n);
    }
}

#[test]
fn window_examples() {
    assert_eq!(window_split(150, 200, 128).unwrap(), vec![0..150]);
    assert_eq!(window_split(300, 200, 128).unwrap(), vec![0..200, 128..300]);
    assert_eq!(window_split(328, 200, 128).unwrap(), vec![0..200, 128..328]);
    for (w, s) in [(128, 128), (100, 128), (10, 0)] {
        assert!(matches!(window_split(300, w, s), Err(Error::InvalidWindow { .. })));
    }
}

#[test]
fn combination_examples() {
    assert_eq!(hotpot_combine(&["A", "A", "B"]), vec![(0, 2), (1, 2)]);
    assert!(hotpot_combine(&["A", "A", "A"]).is_empty());
    assert_eq!(hotpot_combine(&["A", "B", "C"]).len(), 3);
}

struct Constant;

impl WindowScorer for Constant {
    fn score(&self, _: &str, _: &str) -> f64 {
        1.0
    }
}

fn window(article: &str, start: usize, text: &str) -> Window {
    Window {
        doc: 0,
        article_id: article.into(),
        tokens: start..start + 10,
        text: text.into(),
    }
}

#[test]
fn select_topk_examples() {
    let ws = vec![
        window("b", 0, "nothing here"),
        window("a", 128, "Tagus Hall stands here"),
        window("a", 0, "plain words"),
        window("c", 0, "more words"),
    ];
    // constant scores fall back to (article, start)
    assert_eq!(select_topk("q", &ws, &Constant, 3), vec![2, 1, 0]);
    assert_eq!(select_topk("q", &ws, &Constant, 10).len(), 4);
    let ex = QaExample {
        id: "x".into(),
        question: "q".into(),
        documents: vec![],
        tables: vec![],
        answers: golds(&["Tagus Hall"]),
    };
    let gold = common::GoldOverlap::new(&[ex]);
    assert_eq!(select_topk("q", &ws, &gold, 1), vec![1]);
    assert!(select_topk("q", &ws, &LexicalOverlap, 0).is_empty());
}

fn hybrid_example() -> QaExample {
    let passage: String = (0..40).map(|i| format!("p{i}")).collect::<Vec<_>>().join(" ");
    QaExample {
        id: "h".into(),
        question: "Who?".into(),
        documents: vec![],
        tables: vec![QaTable {
            rows: vec![
                golds(&["Name", "Club", "Year", "Goals"]),
                golds(&["Ana Lima", "Porto FC", "2001", "12"]),
                golds(&["Rui Sa", "Leeds Town", "2003", "7"]),
            ],
            linked_cells: vec![LinkedCell { row: 2, col: 1, passage }],
        }],
        answers: golds(&["Leeds Town"]),
    }
}

#[test]
fn hybrid_compose_examples() {
    let ex = hybrid_example();
    let t = &ex.tables[0];
    let texts = |v: &[Option<spanreason::qa::EvToken>]| -> Vec<Option<String>> { v.iter().map(|t| t.as_ref().map(|t| t.text.clone())).collect() };
    let row_words = |r: usize| -> Vec<Option<String>> { t.rows[r].iter().flat_map(|c| tokenize(c)).map(|t| Some(t.text)).collect() };

    let got = hybrid_compose(&ex, 0, 2, 1, Some(0), 20).unwrap();
    let mut want = row_words(0);
    want.extend(row_words(2));
    want.push(None);
    want.extend(tokenize(&t.linked_cells[0].passage).into_iter().map(|t| Some(t.text)));
    assert_eq!(texts(&got), want);
    assert_eq!(got.iter().flatten().filter(|t| t.text.starts_with('p')).count(), 40);

    let bare = hybrid_compose(&ex, 0, 2, 1, None, 20).unwrap();
    assert_eq!(texts(&bare), [row_words(0), row_words(2)].concat());
    assert!(matches!(hybrid_compose(&ex, 0, 9, 9, None, 20), Err(Error::CellOutOfRange { .. })));
}

#[test]
fn fewshot_examples() {
    let data = common::hotpot_fixture();
    assert_eq!(fewshot_sample(&data, data.len(), 3).unwrap(), data);
    let a = fewshot_sample(&data, 6, 16).unwrap();
    assert_eq!(a, fewshot_sample(&data, 6, 16).unwrap());
    let ids: Vec<&str> = a.iter().map(|e| e.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort_by_key(|id| data.iter().position(|e| e.id == *id));
    assert_eq!(ids, sorted);
    assert!(matches!(fewshot_sample(&data, 11, 0), Err(Error::KTooLarge { .. })));
}

fn fixture_vocab(data: &[QaExample]) -> Vocab {
    let mut words: Vec<String> = Vec::new();
    for ex in data {
        words.extend(tokenize(&ex.question).into_iter().map(|t| t.text));
        for d in &ex.documents {
            words.extend(tokenize(&d.text).into_iter().map(|t| t.text));
        }
    }
    words.sort();
    words.dedup();
    Vocab::from_tokens(words)
}

#[test]
fn oracle_model_scores_perfectly() {
    let data = common::hotpot_fixture();
    let vocab = fixture_vocab(&data);
    let oracle = common::OracleModel { max_span_len: 30 };
    let scorer = common::GoldOverlap::new(&data);
    for mode in [EvalMode::Hotpot, EvalMode::Single] {
        let (report, preds) = evaluate(&oracle, &data, mode, &vocab, &EvalConfig::default(), &scorer).unwrap();
        assert_eq!((report.em, report.f1, report.n), (1.0, 1.0, 10), "{mode:?}");
        assert!(preds.iter().zip(&data).all(|(p, e)| p.id == e.id));
    }
    let hybrid = vec![hybrid_example()];
    let (report, _) = evaluate(&oracle, &hybrid, EvalMode::Hybrid, &fixture_vocab(&hybrid), &EvalConfig::default(), &scorer).unwrap();
    assert_eq!((report.em, report.n), (1.0, 1));
    let (report, _) = evaluate(&oracle, &hybrid, EvalMode::Table, &fixture_vocab(&hybrid), &EvalConfig::default(), &scorer).unwrap();
    assert_eq!(report.em, 1.0);
}

#[test]
fn hotpot_inputs_pair_windows_from_different_articles() {
    let data = common::hotpot_fixture();
    let vocab = fixture_vocab(&data);
    let cfg = EvalConfig::default();
    let oracle = common::OracleModel { max_span_len: 30 };
    let scorer = common::GoldOverlap::new(&data);
    for ex in &data {
        let inputs = inputs_for(ex, EvalMode::Hotpot, &vocab, &cfg, &scorer, &oracle).unwrap();
        assert!(!inputs.is_empty() && inputs.len() <= 3);
        for qi in &inputs {
            let docs: std::collections::BTreeSet<usize> = qi
                .evidence
                .iter()
                .flatten()
                .map(|t| match t.origin {
                    spanreason::qa::Origin::Doc { doc } => doc,
                    _ => unreachable!(),
                })
                .collect();
            assert_eq!(docs.len(), 2);
            assert!(qi.input.len() <= cfg.total_max);
        }
    }
}

/// Pseudo-random logits keyed by the input's token ids.
struct NoiseModel(u64);

impl SpanModel for NoiseModel {
    fn logits(&self, _: &QaExample, qi: &QaInput) -> spanreason::Result<(Vec<f64>, Vec<f64>)> {
        let key = qi.input.token_ids.iter().fold(self.0, |h, &t| h.wrapping_mul(1_000_003).wrapping_add(t as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let n = qi.domain.len();
        Ok(((0..n).map(|_| rng.random_range(-4.0..4.0)).collect(), (0..n).map(|_| rng.random_range(-4.0..4.0)).collect()))
    }
}

#[test]
fn cross_window_best_equals_brute_force() {
    let data = common::hotpot_fixture();
    let vocab = fixture_vocab(&data);
    let cfg = EvalConfig { max_span_len: 12, ..EvalConfig::default() };
    let scorer = LexicalOverlap;
    for seed in 0..5 {
        let model = NoiseModel(seed);
        for mode in [EvalMode::Hotpot, EvalMode::Single] {
            for ex in &data {
                let mut all: Vec<(f64, usize, usize, usize)> = Vec::new();
                for (k, qi) in inputs_for(ex, mode, &vocab, &cfg, &scorer, &model).unwrap().iter().enumerate() {
                    let (fs, fe) = model.logits(ex, qi).unwrap();
                    for (s, e, g) in common::brute_force_spans(&fs, &fe, &qi.domain, cfg.max_span_len) {
                        all.push((g, k, s, e));
                    }
                }
                let best = all.iter().copied().fold(None::<(f64, usize, usize, usize)>, |b, x| match b {
                    Some(b) if b.0 >= x.0 => Some(b),
                    _ => Some(x),
                });
                let got = predict(&model, ex, mode, &vocab, &cfg, &scorer).unwrap();
                match best.filter(|b| b.0 > 0.0) {
                    None => assert!(got.is_none()),
                    Some((g, _, s, e)) => {
                        let (span, _) = got.expect("a positive span exists");
                        assert_eq!((span.start, span.end), (s, e));
                        assert!((span.score - g).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn metrics_are_permutation_invariant() {
    let mut data = common::hotpot_fixture();
    let vocab = fixture_vocab(&data);
    let model = NoiseModel(7);
    let cfg = EvalConfig::default();
    let (a, _) = evaluate(&model, &data, EvalMode::Hotpot, &vocab, &cfg, &LexicalOverlap).unwrap();
    data.reverse();
    let (b, _) = evaluate(&model, &data, EvalMode::Hotpot, &vocab, &cfg, &LexicalOverlap).unwrap();
    assert_eq!(a, b);
    assert!(a.em <= a.f1);
}

#[test]
fn dataset_schema_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    let ex = QaExample {
        id: "1".into(),
        question: "Where?".into(),
        documents: vec![Document { article_id: "a".into(), text: "In Lisbon.".into() }],
        tables: vec![],
        answers: golds(&["Lisbon"]),
    };
    std::fs::write(&good, serde_json::to_string(&ex).unwrap() + "\n").unwrap();
    assert_eq!(spanreason::qa::read_dataset(&good).unwrap(), vec![ex]);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"1\",\"question\":\"q\",\"bogus\":1}\n").unwrap();
    assert!(spanreason::qa::read_dataset(&bad).is_err());
}
