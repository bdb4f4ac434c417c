mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqsql::corpus::{generate_queries, Vocabulary};
use seqsql::decompose::*;
use seqsql::nlq::phrases::*;
use seqsql::nlq::*;
use seqsql::session::Database;
use seqsql::sql::*;

const NOW: &str = "'2105-12-31 23:59:00'";

fn stmt(text: &str) -> Statement {
    parse_sql(text).unwrap_or_else(|e| panic!("{text}: {e}"))
}

fn turns_from(texts: &[&str]) -> Vec<TurnSql> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| TurnSql::new(i + 1, stmt(t), Origin::Stage1))
        .collect()
}

fn cats(list: &[Category]) -> BTreeSet<Category> {
    list.iter().copied().collect()
}

fn cat_set(c: &TurnCategory) -> BTreeSet<Category> {
    c.iter().collect()
}

#[test]
fn calendar_phrases() {
    let f = |unit: &str, back: u32| {
        time_global(&format!(
            "DATETIME(t.c, 'start of {unit}') = DATETIME({NOW}, 'start of {unit}', '-{back} {unit}')"
        ))
        .unwrap()
    };
    assert_eq!(f("year", 0), "this year");
    assert_eq!(f("year", 1), "last year");
    assert_eq!(f("month", 1), "last month");
    assert_eq!(f("day", 0), "today");
    assert_eq!(f("day", 1), "yesterday");
    assert_eq!(f("year", 3), "3 years ago");
}

#[test]
fn absolute_and_open_phrases() {
    assert_eq!(
        time_global(&format!("DATETIME(t.c) >= DATETIME({NOW}, '-1 year')")).unwrap(),
        "since 1 year ago"
    );
    assert_eq!(time_global("STRFTIME('%Y', t.c) = '2104'").unwrap(), "in 2104");
    assert_eq!(
        time_global("STRFTIME('%Y-%m', t.c) >= '2104-05'").unwrap(),
        "since 05/2104"
    );
    assert_eq!(
        time_global("admissions.dischtime IS NULL").unwrap(),
        "on the current hospital visit"
    );
    assert_eq!(
        time_global("icustays.outtime IS NULL").unwrap(),
        "on the current icu visit"
    );
    assert_eq!(
        time_global("STRFTIME('%Y', t.c) >= '2101' AND STRFTIME('%Y', t.c) <= '2103'").unwrap(),
        "since 2101 and until 2103"
    );
    assert_eq!(time_global("t.c = t.d"), None);
}

#[test]
fn exact_within_and_age_phrases() {
    assert_eq!(time_exact("ORDER BY t.c DESC LIMIT 1").unwrap(), "last");
    assert_eq!(time_exact("ORDER BY t.c ASC LIMIT 1").unwrap(), "first");
    assert_eq!(time_exact("ORDER BY t.c LIMIT 1").unwrap(), "first");
    assert_eq!(
        time_exact("ORDER BY t.c DESC LIMIT 1 OFFSET 1").unwrap(),
        "second to last"
    );
    assert_eq!(time_exact("ORDER BY t.c ASC LIMIT 1 OFFSET 2").unwrap(), "third");
    assert_eq!(time_exact("ORDER BY t.c DESC LIMIT 2"), None);
    assert_eq!(
        time_within("DATETIME(t1.s, 'start of month') = DATETIME(t2.s, 'start of month')").unwrap(),
        "within the same month"
    );
    assert_eq!(
        time_within("DATETIME(t2.s) BETWEEN DATETIME(t1.s) AND DATETIME(t1.s, '+2 day')").unwrap(),
        "within 2 days"
    );
    assert_eq!(age_group("admissions.age BETWEEN 30 AND 39").unwrap(), "in the 30s");
    assert_eq!(age_group("admissions.age >= 60").unwrap(), "60 or above");
    assert_eq!(ordinal(21), "21st");
    assert_eq!(ordinal(12), "12th");
}

#[test]
fn normalization_abstracts_names_and_values() {
    let t = normalize_subquery(&stmt(
        "SELECT d_items.itemid FROM d_items WHERE d_items.label = 'admit wt'",
    ));
    assert_eq!(
        t.text,
        "SELECT table.column FROM table WHERE table.column = [val_placeholder]"
    );
    let bound: Vec<(SlotRole, &str)> = t.slots.iter().map(|s| (s.role, s.value.as_str())).collect();
    assert_eq!(
        bound,
        [
            (SlotRole::Table, "d_items"),
            (SlotRole::Column, "itemid"),
            (SlotRole::Table, "d_items"),
            (SlotRole::Table, "d_items"),
            (SlotRole::Column, "label"),
            (SlotRole::Value, "'admit wt'"),
        ]
    );
}

#[test]
fn every_bundled_column_resolves() {
    let lexicon = SchemaLexicon::bundled();
    assert_eq!(lexicon.name("labevents.itemid"), Some("lab test item id"));
    assert_eq!(lexicon.list_name("admissions.subject_id"), Some("patient ids"));
    assert_eq!(lexicon.name("t1.subject_id"), lexicon.name("*.subject_id"));
    assert_eq!(lexicon.name("nowhere.nothing"), None);
    let schema = Database::open(&synth_db_path(100, 1)).unwrap();
    let conn = schema.connection();
    let mut tables = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table'")
        .unwrap();
    let tables: Vec<String> = tables
        .query_map([], |r| r.get(0))
        .unwrap()
        .map(Result::unwrap)
        .collect();
    assert_eq!(tables.len(), 13);
    for table in &tables {
        assert!(lexicon.name(table).is_some(), "table {table}");
        let mut cols = conn
            .prepare(&format!("SELECT name FROM pragma_table_info('{table}')"))
            .unwrap();
        let cols: Vec<String> = cols
            .query_map([], |r| r.get(0))
            .unwrap()
            .map(Result::unwrap)
            .collect();
        for c in cols {
            assert!(lexicon.name(&format!("{table}.{c}")).is_some(), "{table}.{c}");
        }
    }
}

#[test]
fn list_query_gets_the_reference_question() {
    let g = NlqGenerator::bundled_plain();
    assert_eq!(g.generate(&stmt(NATEGLINIDE_LIST), 0).unwrap(), NATEGLINIDE_LIST_NLQ);
}

#[test]
fn token_turns_name_their_references() {
    let g = NlqGenerator::bundled_plain();
    let turns = turns_from(&ICU_WEIGHT_TURNS);
    let nlq = g.generate(&turns[4].stmt, 0).unwrap();
    assert_eq!(nlq, "What is the difference between result3 and result4?");
    let filter = stmt("PREV_QUERY1 AND admissions.dischtime IS NULL");
    assert_eq!(
        g.generate(&filter, 0).unwrap(),
        "Keep only the entries of result1 on the current hospital visit."
    );
}

#[test]
fn template_without_placeholders_is_verbatim() {
    let table = TemplateTable::parse("Z1\tSELECT COUNT(*) FROM table\tHow many rows are there?\n")
        .unwrap();
    let g = NlqGenerator::new(table, SchemaLexicon::bundled(), ParaphraseBank::empty());
    for seed in 0..5 {
        assert_eq!(
            g.generate(&stmt("SELECT COUNT(*) FROM admissions"), seed).unwrap(),
            "How many rows are there?"
        );
    }
}

#[test]
fn unmatched_and_lexicon_miss_are_errors() {
    let g = NlqGenerator::bundled_plain();
    let odd = stmt("SELECT admissions.age FROM admissions ORDER BY admissions.age");
    let r = g.generate(&odd, 0);
    assert!(matches!(r, Err(NlqError::Unmatched(_))), "{r:?}");
    let sparse = SchemaLexicon::parse("admissions\thospital admission\thospital admissions\n").unwrap();
    let g = NlqGenerator::new(TemplateTable::bundled(), sparse, ParaphraseBank::empty());
    let q = stmt("SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 3");
    assert_eq!(
        g.generate(&q, 0),
        Err(NlqError::LexiconMiss("admissions.hadm_id".into()))
    );
}

#[test]
fn malformed_template_rows_are_rejected() {
    assert!(TemplateTable::parse("A\tSELECT table.column FROM table\tWhat [bogus]?\n").is_err());
    assert!(TemplateTable::parse("A\tSELECT table.column FROM table\tA [PREV] b?\n").is_err());
    assert!(TemplateTable::parse(
        "A\tSELECT [PREV]\t[PREV.0] and [PREV.0]\n"
    )
    .is_err());
    assert!(TemplateTable::parse("A\tonly two fields\n").is_err());
}

#[test]
fn generation_is_deterministic_per_seed() {
    let g = NlqGenerator::bundled();
    let q = stmt("SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 3");
    let seen: BTreeSet<String> = (0..40).map(|s| g.generate(&q, s).unwrap()).collect();
    assert!(seen.len() > 3, "paraphrases are sampled: {seen:?}");
    for s in 0..40 {
        assert_eq!(g.generate(&q, s), g.generate(&q, s));
    }
    for text in &seen {
        assert!(text.contains('3'));
    }
}

#[test]
fn bundled_bank_is_valid_and_sized() {
    let templates = TemplateTable::bundled();
    let bank = ParaphraseBank::bundled(&templates);
    let mut turn_templates = 0;
    for t in templates.iter().filter(|t| t.template_id.starts_with('T')) {
        turn_templates += 1;
        let variants = bank.variants(&t.template_id);
        assert_eq!(variants.len(), 10, "{}", t.template_id);
        let distinct: BTreeSet<&String> = variants.iter().collect();
        assert_eq!(distinct.len(), 10);
        for v in variants {
            assert_ne!(v, &t.text);
            assert_eq!(validate_paraphrase(&t.text, v), Ok(()));
        }
    }
    assert_eq!(turn_templates, 26);
}

#[test]
fn paraphrase_validation_reports_each_kind() {
    let original = "Among [PREV.0], which ones have their [WHERE.col] in [PREV.1]?";
    assert_eq!(validate_paraphrase(original, original), Ok(()));
    let v = validate_paraphrase(original, "Which [WHERE.col] of [PREV.0] is in [PREV.0]?").unwrap_err();
    assert_eq!(v.missing, ["[PREV.1]"]);
    assert_eq!(v.duplicated, ["[PREV.0]"]);
    assert!(v.unexpected.is_empty());
    let v = validate_paraphrase("Show [val_placeholder].", "Show it.").unwrap_err();
    assert_eq!(v.missing, ["[val_placeholder]"]);
    let v = validate_paraphrase("Show [val_placeholder].", "Show [val_placeholder] [n_rank].").unwrap_err();
    assert_eq!(v.unexpected, ["[n_rank]"]);
}

#[derive(Debug, Clone, Copy)]
enum Mutation {
    Drop,
    Duplicate,
    Rename,
    Reword,
    Swap,
}

/// Apply a mutation to `text`; returns the mutated text and the expected
/// violation (None if the mutation leaves every slot intact).
fn mutate(text: &str, m: Mutation, rng: &mut ChaCha8Rng) -> (String, Option<Violation>) {
    let ps = placeholders(text);
    let pick = &ps[rng.random_range(0..ps.len())];
    let (before, after) = (&text[..pick.start], &text[pick.end..]);
    match m {
        Mutation::Drop => (
            format!("{before}{after}"),
            Some(Violation {
                missing: vec![pick.raw.clone()],
                ..Violation::default()
            }),
        ),
        Mutation::Duplicate => (
            format!("{before}{} {}{after}", pick.raw, pick.raw),
            Some(Violation {
                duplicated: vec![pick.raw.clone()],
                ..Violation::default()
            }),
        ),
        Mutation::Rename => (
            format!("{before}[mystery_slot]{after}"),
            Some(Violation {
                missing: vec![pick.raw.clone()],
                unexpected: vec!["[mystery_slot]".into()],
                ..Violation::default()
            }),
        ),
        Mutation::Reword => (format!("Please tell me: {text}"), None),
        Mutation::Swap => {
            let other = &ps[rng.random_range(0..ps.len())];
            let swapped = text
                .replace(&pick.raw, "\u{1}")
                .replace(&other.raw, &pick.raw)
                .replace('\u{1}', &other.raw);
            (swapped, None)
        }
    }
}

#[test]
fn mutation_harness_flags_exactly_the_touched_slots() {
    let templates = TemplateTable::bundled();
    let with_slots: Vec<&NlqTemplate> = templates
        .iter()
        .filter(|t| !placeholders(&t.text).is_empty())
        .collect();
    let kinds = [
        Mutation::Drop,
        Mutation::Duplicate,
        Mutation::Rename,
        Mutation::Reword,
        Mutation::Swap,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut flagged = 0;
    for i in 0..50 {
        let t = with_slots[rng.random_range(0..with_slots.len())];
        let (text, expected) = mutate(&t.text, kinds[i % kinds.len()], &mut rng);
        let got = validate_paraphrase(&t.text, &text).err();
        assert_eq!(got, expected, "{} -> {text}", t.text);
        flagged += usize::from(got.is_some());
    }
    assert_eq!(flagged, 30);
}

#[test]
fn client_collection_keeps_only_valid_candidates() {
    struct Echo;
    impl ParaphraseClient for Echo {
        fn paraphrase(&self, t: &NlqTemplate) -> Result<Vec<String>, NlqError> {
            Ok(vec![
                t.text.clone(),
                format!("Tell me: {}", t.text),
                format!("Tell me: {}", t.text),
                format!("{} [extra]", t.text),
            ])
        }
    }
    let templates = TemplateTable::bundled();
    let (bank, rejected) = collect_paraphrases(&Echo, &templates).unwrap();
    for t in templates.iter() {
        assert_eq!(bank.variants(&t.template_id), [format!("Tell me: {}", t.text)]);
    }
    assert_eq!(rejected.len(), templates.len());
    assert!(rejected.iter().all(|r| r.violation.unexpected == ["[extra]"]));
    let round = ParaphraseBank::from_json(&bank.to_json(), &templates).unwrap();
    assert_eq!(round, bank);
}

#[test]
fn filtering_and_independent_categories() {
    let turns = turns_from(&[
        "SELECT admissions.hadm_id FROM admissions WHERE admissions.subject_id = 10",
        "PREV_QUERY1 AND admissions.dischtime IS NULL",
    ]);
    assert_eq!(cat_set(&categorize_turn(&turns, 1)), cats(&[Category::Independent]));
    assert_eq!(
        cat_set(&categorize_turn(&turns, 2)),
        cats(&[Category::Referential, Category::Filtering])
    );
}

#[test]
fn direction_flip_is_modifying() {
    let turns = turns_from(&ICU_WEIGHT_TURNS);
    assert_eq!(
        cat_set(&categorize_turn(&turns, 4)),
        cats(&[Category::Referential, Category::Modifying])
    );
    assert_eq!(cat_set(&categorize_turn(&turns, 3)), cats(&[Category::Referential]));
    assert_eq!(cat_set(&categorize_turn(&turns, 5)), cats(&[Category::Referential]));
    let refines = turns_from(&[
        "SELECT labevents.valuenum FROM labevents WHERE labevents.hadm_id = 7",
        "PREV_QUERY1 ORDER BY labevents.charttime DESC LIMIT 1",
        "PREV_QUERY1 ORDER BY labevents.charttime ASC LIMIT 1",
    ]);
    assert_eq!(
        cat_set(&categorize_turn(&refines, 3)),
        cats(&[Category::Referential, Category::Filtering, Category::Modifying])
    );
}

#[test]
fn category_sets_serialize_as_names() {
    let turns = turns_from(&["SELECT admissions.age FROM admissions"]);
    let json = serde_json::to_string(&categorize_turn(&turns, 1)).unwrap();
    assert_eq!(json, "[\"INDEPENDENT\"]");
}

#[test]
fn completeness_catches_dropped_values_and_indices() {
    let q = stmt("PREV_QUERY2 AND chartevents.itemid IN ( PREV_RESULT13 ) AND chartevents.valuenum = 5");
    assert!(missing_information(&q, "Keep rows of result2 in result13 with value 5.").is_empty());
    assert_eq!(
        missing_information(&q, "Keep rows of result2 in result1 with value 15."),
        ["5", "turn index 13"]
    );
    let fixed = stmt("SELECT d_items.itemid FROM d_items WHERE d_items.label = 'admit wt' AND d_items.linksto = 'chartevents'");
    assert!(missing_information(&fixed, "Which item is admit wt?").is_empty());
}

/// Generated corpus on a small database: every turn and source query
/// matches a template and its question carries every value and index.
#[test]
fn generated_corpus_is_covered_and_complete() {
    let db = Database::open(&synth_db_path(100, 1)).unwrap();
    let vocab = Vocabulary::from_connection(db.connection()).unwrap();
    let g = NlqGenerator::bundled();
    let cfg = DecomposeConfig::default();
    let mut used = BTreeSet::new();
    let mut counts = [0usize; 2];
    for q in generate_queries(&vocab, 156, 11) {
        let source = parse_select(&q.sql).unwrap();
        let plan = decompose_pipeline(&q.id, &source, &cfg).unwrap();
        let goal = Statement::from(source);
        let nlq = g.generate(&goal, 0).unwrap_or_else(|e| panic!("{}: {e}", q.family));
        assert_eq!(missing_information(&goal, &nlq), Vec::<String>::new(), "{nlq}");
        used.insert(g.template_for(&goal).unwrap().template_id.clone());
        for t in &plan.turns {
            let nlq = g.generate(&t.stmt, t.index as u64).unwrap_or_else(|e| panic!("{}: {e}", t.sql()));
            assert_eq!(missing_information(&t.stmt, &nlq), Vec::<String>::new(), "{nlq}");
            used.insert(g.template_for(&t.stmt).unwrap().template_id.clone());
            let c = categorize_turn(&plan.turns, t.index);
            counts[usize::from(!c.is_independent())] += 1;
        }
    }
    assert!(counts[0] > 0 && counts[1] > 0);
    let all: BTreeSet<String> = TemplateTable::bundled().iter().map(|t| t.template_id.clone()).collect();
    assert_eq!(used, all, "every bundled template is exercised");
}

fn template_strategy() -> impl Strategy<Value = String> {
    let table = TemplateTable::bundled();
    let texts: Vec<String> = table.iter().map(|t| t.text.clone()).collect();
    proptest::sample::select(texts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reordering_and_rewording_preserves_validity(
        text in template_strategy(),
        order in any::<u64>(),
        filler in "[a-z ]{0,12}",
    ) {
        let mut ps: Vec<String> = placeholders(&text).into_iter().map(|p| p.raw).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(order);
        for i in (1..ps.len()).rev() {
            ps.swap(i, rng.random_range(0..=i));
        }
        let paraphrase = format!("{filler} {} ?", ps.join(&format!(" {filler} ")));
        prop_assert_eq!(validate_paraphrase(&text, &paraphrase), Ok(()));
    }

    #[test]
    fn dropping_any_placeholder_is_reported(text in template_strategy(), k in any::<prop::sample::Index>()) {
        let ps = placeholders(&text);
        prop_assume!(!ps.is_empty());
        let p = &ps[k.index(ps.len())];
        let mutated = format!("{}{}", &text[..p.start], &text[p.end..]);
        let v = validate_paraphrase(&text, &mutated).unwrap_err();
        prop_assert_eq!(v.missing, vec![p.raw.clone()]);
    }
}
