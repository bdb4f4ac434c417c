mod common;

use seqsql::corpus::*;
use seqsql::io::*;
use seqsql::nlq::{missing_information, Category};
use seqsql::session::{replay_interaction, Database};
use seqsql::sql::parse_sql;

#[test]
fn bundled_corpus_regenerates_byte_for_byte() {
    let (n, seed) = MINI_CORPUS_DB;
    let db = Database::open(&common::synth_db_path(n, seed)).unwrap();
    let rebuilt = build_mini_corpus(db.connection()).unwrap();
    let bundled = bundled_interactions();
    assert_eq!(bundled.len(), MINI_CORPUS_QUERIES.0);
    assert_eq!(to_jsonl_string(&rebuilt), to_jsonl_string(&bundled));
}

#[test]
fn every_bundled_interaction_replays() {
    let db = common::synth_db_path(MINI_CORPUS_DB.0, MINI_CORPUS_DB.1);
    for r in bundled_interactions() {
        r.to_turns().unwrap();
        let outcomes = replay_interaction(&db, &r.sql_texts()).unwrap();
        for o in &outcomes {
            assert!(o.is_ok(), "{} turn {}: {:?}", r.interaction_id, o.index, o.result);
        }
    }
}

#[test]
fn every_bundled_question_is_complete() {
    for r in bundled_interactions() {
        assert!(r.goal_nlq.as_deref().is_some_and(|g| !g.is_empty()));
        let goal = parse_sql(r.provenance.source.as_deref().unwrap()).unwrap();
        assert!(missing_information(&goal, r.goal_nlq.as_deref().unwrap()).is_empty());
        for t in &r.turns {
            let stmt = parse_sql(&t.sql).unwrap();
            let missing = missing_information(&stmt, &t.nlq);
            assert!(missing.is_empty(), "{} turn {}: {missing:?}", r.interaction_id, t.index);
        }
    }
}

#[test]
fn first_turns_are_independent() {
    for r in bundled_interactions() {
        assert!(r.turns[0].categories.is_independent());
        for t in &r.turns {
            assert!(t.categories.iter().next().is_some());
            if t.categories.contains(Category::Independent) {
                assert_eq!(t.categories.iter().count(), 1);
            }
        }
    }
}

#[test]
fn interaction_files_round_trip() {
    let corpus = bundled_interactions();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    write_interactions(&path, &corpus).unwrap();
    assert_eq!(read_interactions(&path).unwrap(), corpus);
}

#[test]
fn reader_reports_line_numbers_and_versions() {
    let corpus = bundled_interactions();
    let good = serde_json::to_string(&corpus[0]).unwrap();
    let text = format!("{good}\n\n{{not json}}\n");
    match read_versioned::<InteractionRecord, _>(text.as_bytes()) {
        Err(IoError::Json { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let mut old = corpus[0].clone();
    old.format_version = 99;
    let text = format!("{good}\n{}\n", serde_json::to_string(&old).unwrap());
    assert!(matches!(
        read_versioned::<InteractionRecord, _>(text.as_bytes()),
        Err(IoError::Version { line: 2, found: 99 })
    ));
    let blank_lines = format!("\n{good}\n   \n");
    assert_eq!(read_versioned::<InteractionRecord, _>(blank_lines.as_bytes()).unwrap().len(), 1);
}

#[test]
fn malformed_turn_sequences_are_rejected() {
    let ok = common::record_of("a", &["SELECT 1", "SELECT ( PREV_RESULT1 ) + 1"]);
    ok.to_turns().unwrap();
    let forward = common::record_of("b", &["SELECT ( PREV_RESULT2 ) + 1", "SELECT 1"]);
    assert!(forward.to_turns().is_err());
    let mut gap = ok.clone();
    gap.turns[1].index = 3;
    assert!(gap.to_turns().is_err());
}

#[test]
fn building_is_deterministic_and_seed_sensitive() {
    let db = Database::open(&common::synth_db_path(100, 1)).unwrap();
    let vocab = Vocabulary::from_connection(db.connection()).unwrap();
    let queries = generate_queries(&vocab, 30, 4);
    let nlq = seqsql::nlq::NlqGenerator::bundled();
    let cfg = seqsql::decompose::DecomposeConfig::default();
    let a = build_interactions(&queries, &cfg, None, &nlq, 1).unwrap();
    let b = build_interactions(&queries, &cfg, None, &nlq, 1).unwrap();
    let c = build_interactions(&queries, &cfg, None, &nlq, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let sqls = |rs: &[InteractionRecord]| -> Vec<String> {
        rs.iter().flat_map(|r| r.turns.iter().map(|t| t.sql.clone())).collect()
    };
    assert_eq!(sqls(&a), sqls(&c));
}
