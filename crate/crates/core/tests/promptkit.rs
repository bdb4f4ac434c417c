mod common;

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use seqsql::corpus::bundled_interactions;
use seqsql::eval::HistoryMode;
use seqsql::io::InteractionRecord;
use seqsql::prompt::*;
use seqsql::split::{split_corpus, SplitMode};

fn with_questions(id: &str, questions: &[&str]) -> InteractionRecord {
    let sqls: Vec<String> = (1..=questions.len()).map(|k| format!("SELECT {k}")).collect();
    let refs: Vec<&str> = sqls.iter().map(String::as_str).collect();
    let mut r = common::record_of(id, &refs);
    for (t, q) in r.turns.iter_mut().zip(questions) {
        t.nlq = q.to_string();
    }
    r
}

fn mini_train() -> Vec<InteractionRecord> {
    split_corpus(&bundled_interactions(), SplitMode::Random, 0.2, 1)
        .unwrap()
        .train
}

/// Textbook BM25 written out term by term.
fn oracle_bm25(docs: &[&str], query: &str) -> Vec<f64> {
    let docs: Vec<Vec<String>> = docs
        .iter()
        .map(|d| d.split_whitespace().map(|w| w.to_lowercase()).collect())
        .collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let query: Vec<String> = query.split_whitespace().map(|w| w.to_lowercase()).collect();
    docs.iter()
        .map(|d| {
            let mut score = 0.0;
            for q in &query {
                let f = d.iter().filter(|w| *w == q).count() as f64;
                let df = docs.iter().filter(|o| o.contains(q)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = d.len() as f64;
                score += idf * f * 2.2 / (f + 1.2 * (0.25 + 0.75 * dl / avgdl));
            }
            score
        })
        .collect()
}

#[test]
fn bm25_matches_the_textbook_formula() {
    let docs = [
        "what is the last weight of patient 10001",
        "list all drugs prescribed to patient 10002 last year",
        "what is the maximum heart rate",
        "weight weight weight",
        "",
    ];
    let index = Bm25Index::new(&docs);
    for query in ["weight of patient", "last year", "Heart RATE", "unknown words", ""] {
        let expected = oracle_bm25(&docs, query);
        let ranked = index.rank(query);
        assert_eq!(ranked.len(), docs.len());
        for (d, score) in ranked {
            assert!((score - expected[d]).abs() < 1e-12, "{query} doc {d}");
        }
    }
}

#[test]
fn ranking_is_descending_with_ties_by_position() {
    let index = Bm25Index::new(&["a b", "c d", "a a", "c d"]);
    let ranked = index.rank("c");
    assert_eq!(ranked[0].0, 1);
    assert_eq!(ranked[1].0, 3);
    assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(Bm25Index::new::<&str>(&[]).rank("x").is_empty());
}

#[test]
fn corpora_counts() {
    let corpus = ExemplarCorpus::build(&[with_questions("a", &["q one", "q two", "q three"])]);
    assert_eq!(corpus.turn_level.len(), 3);
    assert_eq!(corpus.interaction_level.len(), 1);
    assert_eq!(corpus.interaction_level[0].text(), "q one q two q three");
    let empty = ExemplarCorpus::build(&[]);
    assert!(empty.turn_level.is_empty() && empty.interaction_level.is_empty());
    assert!(retrieve_exemplars("anything", &["before".to_string()], &empty, 10, 10).is_empty());
}

#[test]
fn turn_corpus_covers_every_train_turn() {
    let train = mini_train();
    let corpus = ExemplarCorpus::build(&train);
    let turns: usize = train.iter().map(|r| r.turns.len()).sum();
    assert_eq!(corpus.turn_level.len(), turns);
    assert_eq!(corpus.interaction_level.len(), train.len());
    let ids: BTreeSet<&str> = train.iter().map(|r| r.interaction_id.as_str()).collect();
    assert!(corpus
        .turn_level
        .iter()
        .all(|t| ids.contains(t.interaction_id.as_str())));
}

#[test]
fn empty_history_takes_all_from_turn_route() {
    let corpus = ExemplarCorpus::build(&mini_train());
    let ex = retrieve_exemplars("what is the last weight of the patient", &[], &corpus, DEFAULT_K, DEFAULT_K);
    assert_eq!(ex.len(), 20);
    assert!(ex.iter().all(|e| e.route == Route::Turn));
}

#[test]
fn history_and_turn_routes_split_ten_and_ten() {
    let train = mini_train();
    let corpus = ExemplarCorpus::build(&train);
    let probe = &bundled_interactions()[0];
    let history: Vec<String> = probe.turns[..2].iter().map(|t| t.nlq.clone()).collect();
    let ex = retrieve_exemplars(&probe.turns[2].nlq, &history, &corpus, DEFAULT_K, DEFAULT_K);
    assert_eq!(ex.len(), 20);
    assert_eq!(ex.iter().filter(|e| e.route == Route::History).count(), 10);
    assert_eq!(ex.iter().filter(|e| e.route == Route::Turn).count(), 10);
    assert!(ex[..10].iter().all(|e| e.route == Route::History));
    let keys: BTreeSet<(String, usize)> = ex
        .iter()
        .map(|e| (e.interaction_id.clone(), e.turn_index))
        .collect();
    assert_eq!(keys.len(), 20);
}

#[test]
fn exact_question_is_retrieved_first() {
    let train = mini_train();
    let corpus = ExemplarCorpus::build(&train);
    for r in train.iter().take(10) {
        for t in &r.turns {
            let ex = retrieve_exemplars(&t.nlq, &[], &corpus, 0, 10);
            assert_eq!(ex[0].questions, vec![t.nlq.clone()]);
        }
    }
}

#[test]
fn small_corpus_returns_what_it_has() {
    let train: Vec<_> = (0..5)
        .map(|i| with_questions(&format!("s{i}"), &[&format!("question number {i}")]))
        .collect();
    let corpus = ExemplarCorpus::build(&train);
    let ex = retrieve_exemplars("question", &["earlier question".to_string()], &corpus, 10, 10);
    assert_eq!(ex.len(), 5);
    let ex = retrieve_exemplars("question", &[], &corpus, 10, 10);
    assert_eq!(ex.len(), 5);
}

#[test]
fn short_history_route_is_backfilled_from_turns() {
    let train = vec![
        with_questions("a", &["alpha one", "alpha two"]),
        with_questions("b", &["beta one", "beta two", "beta three"]),
    ];
    let corpus = ExemplarCorpus::build(&train);
    let ex = retrieve_exemplars("beta", &["alpha".to_string()], &corpus, 10, 2);
    assert_eq!(ex.len(), 5);
    assert_eq!(ex.iter().filter(|e| e.route == Route::History).count(), 2);
}

/// Distinct (interaction, target turn) keys reachable by the routes.
fn capacity(train: &[InteractionRecord], with_history: bool) -> usize {
    let mut keys: BTreeSet<(String, usize)> = train
        .iter()
        .flat_map(|r| r.turns.iter().map(|t| (r.interaction_id.clone(), t.index)))
        .collect();
    if with_history {
        keys.extend(
            train
                .iter()
                .filter(|r| !r.turns.is_empty())
                .map(|r| (r.interaction_id.clone(), r.turns.len())),
        );
    }
    keys.len()
}

proptest! {
    #[test]
    fn retrieval_count_is_budget_capped_by_capacity(
        lengths in proptest::collection::vec(1usize..5, 0..8),
        k_history in 0usize..12,
        k_turn in 0usize..12,
        with_history in any::<bool>(),
    ) {
        let words = ["heart", "rate", "weight", "drug", "lab", "cost", "stay"];
        let train: Vec<InteractionRecord> = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let qs: Vec<String> = (0..n).map(|k| format!("{} {}", words[(i + k) % words.len()], k)).collect();
                let refs: Vec<&str> = qs.iter().map(String::as_str).collect();
                with_questions(&format!("i{i}"), &refs)
            })
            .collect();
        let corpus = ExemplarCorpus::build(&train);
        let history = if with_history { vec!["heart rate".to_string()] } else { vec![] };
        let ex = retrieve_exemplars("weight drug", &history, &corpus, k_history, k_turn);
        let expected = (k_history + k_turn).min(capacity(&train, with_history));
        prop_assert_eq!(ex.len(), expected);
        let keys: BTreeSet<(String, usize)> = ex.iter().map(|e| (e.interaction_id.clone(), e.turn_index)).collect();
        prop_assert_eq!(keys.len(), ex.len());
    }
}

fn current() -> CurrentInteraction {
    CurrentInteraction {
        history: vec![
            ("show the hospital stays of patient 10001".to_string(), Some("SELECT 1".to_string())),
            ("and their icu stays".to_string(), None),
        ],
        question: "what is the last weight measured in result2".to_string(),
    }
}

#[test]
fn bare_prompt_has_preamble_and_question_only() {
    let c = CurrentInteraction {
        history: vec![],
        question: "how many patients are there".to_string(),
    };
    let p = build_prompt(HistoryMode::Qq, &[], &c, false);
    assert!(p.contains("### Schema"));
    assert!(p.contains("admissions("));
    assert!(!p.contains("### Examples"));
    assert!(!p.contains("PREV_RESULT"));
    assert!(p.ends_with("Q: how many patients are there\nSQL:"));
    assert_eq!(p.matches("Q: ").count(), 1);
}

#[test]
fn token_note_names_both_tokens() {
    let p = build_prompt(HistoryMode::Qs, &[], &current(), true);
    assert!(p.contains("PREV_QUERY"));
    assert!(p.contains("PREV_RESULT"));
}

#[test]
fn schema_lists_all_thirteen_tables() {
    let schema = schema_description();
    assert_eq!(schema.lines().count(), 13);
    assert!(schema.contains("chartevents(") && schema.contains("d_labitems("));
}

#[test]
fn qs_shows_every_sql_and_qq_only_targets() {
    let train = mini_train();
    let corpus = ExemplarCorpus::build(&train);
    let c = current();
    let history: Vec<String> = c.history.iter().map(|(q, _)| q.clone()).collect();
    let ex = retrieve_exemplars(&c.question, &history, &corpus, DEFAULT_K, DEFAULT_K);
    let questions: usize = ex.iter().map(|e| e.questions.len()).sum();

    let qs = build_prompt(HistoryMode::Qs, &ex, &c, true);
    let qq = build_prompt(HistoryMode::Qq, &ex, &c, true);
    assert_eq!(qs.matches("\nQ: ").count(), questions + c.history.len() + 1);
    assert_eq!(qq.matches("\nQ: ").count(), questions + c.history.len() + 1);
    assert_eq!(qs.matches("\nSQL: ").count(), questions + 1);
    assert_eq!(qq.matches("\nSQL: ").count(), ex.len());

    let mut expected: HashMap<&str, usize> = HashMap::new();
    for q in ex.iter().flat_map(|e| &e.questions) {
        *expected.entry(q.as_str()).or_insert(0) += 1;
    }
    for q in c.history.iter().map(|(q, _)| q.as_str()).chain([c.question.as_str()]) {
        *expected.entry(q).or_insert(0) += 1;
    }
    for (q, n) in expected {
        assert_eq!(qs.matches(&format!("Q: {q}\n")).count(), n, "{q}");
    }
}

#[test]
fn prompt_is_deterministic() {
    let corpus = ExemplarCorpus::build(&mini_train());
    let c = current();
    let history: Vec<String> = c.history.iter().map(|(q, _)| q.clone()).collect();
    let a = retrieve_exemplars(&c.question, &history, &corpus, DEFAULT_K, DEFAULT_K);
    let b = retrieve_exemplars(&c.question, &history, &ExemplarCorpus::build(&mini_train()), DEFAULT_K, DEFAULT_K);
    assert_eq!(a, b);
    assert_eq!(
        build_prompt(HistoryMode::Qs, &a, &c, true),
        build_prompt(HistoryMode::Qs, &b, &c, true)
    );
}
