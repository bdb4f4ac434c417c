mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqsql::corpus::bundled_interactions;
use seqsql::split::*;
use seqsql::sql::{extract_token_refs, parse_sql};

fn composition(id: usize, components: &[&str]) -> CompositionRecord {
    CompositionRecord {
        composition_id: format!("c{id:04}"),
        composition_template: format!("template {id}"),
        component_set: components.iter().map(|s| s.to_string()).collect(),
        members: vec![format!("i{id}")],
    }
}

fn random_compositions(rng: &mut ChaCha8Rng) -> Vec<CompositionRecord> {
    let universe = rng.random_range(3..12);
    let n = rng.random_range(1..25);
    (1..=n)
        .map(|id| {
            let size = rng.random_range(1..=universe.min(5));
            let comps: BTreeSet<String> = (0..size)
                .map(|_| format!("k{}", rng.random_range(0..universe)))
                .collect();
            CompositionRecord {
                composition_id: format!("c{id:04}"),
                composition_template: format!("t{id}"),
                component_set: comps,
                members: vec![format!("i{id}")],
            }
        })
        .collect()
}

/// Replays the moves of a manifest, checking each against counts
/// recomputed from scratch, and that nothing eligible is left at the end.
fn check_greedy(comps: &[CompositionRecord], manifest: &SplitManifest) {
    let mut train: Vec<&CompositionRecord> = comps.iter().collect();
    let eligible_now = |train: &[&CompositionRecord]| -> Vec<String> {
        train
            .iter()
            .filter(|c| {
                c.component_set.iter().all(|k| {
                    train
                        .iter()
                        .filter(|o| o.component_set.contains(k))
                        .count()
                        >= 2
                })
            })
            .map(|c| c.composition_id.clone())
            .collect()
    };
    for moved in &manifest.moves {
        let eligible = eligible_now(&train);
        assert!(eligible.contains(moved), "{moved} was not eligible");
        let size = |id: &String| {
            comps
                .iter()
                .find(|c| &c.composition_id == id)
                .unwrap()
                .component_set
                .len()
        };
        let best = eligible.iter().map(size).max().unwrap();
        assert_eq!(size(moved), best, "{moved} is not maximal");
        let first_best = eligible.iter().filter(|id| size(id) == best).min().unwrap();
        assert_eq!(moved, first_best, "tie not broken by id");
        train.retain(|c| &c.composition_id != moved);
    }
    assert!(eligible_now(&train).is_empty(), "an eligible composition stayed in train");
    let train_ids: BTreeSet<String> = train.iter().map(|c| c.composition_id.clone()).collect();
    assert_eq!(train_ids, manifest.train);
    assert_eq!(
        manifest.test,
        manifest.moves.iter().cloned().collect::<BTreeSet<_>>()
    );
}

#[test]
fn three_composition_fixture_sends_the_last_to_test() {
    let sources: Vec<_> = common::COMPOSITION_TRIPLE
        .iter()
        .enumerate()
        .map(|(i, s)| parse_source(&format!("r{}", i + 1), s).unwrap())
        .collect();
    let comps = build_compositions(&sources).unwrap();
    assert_eq!(comps.len(), 3);
    let union: BTreeSet<&String> = comps[..2].iter().flat_map(|c| &c.component_set).collect();
    assert!(comps[2].component_set.iter().all(|k| union.contains(k)));
    let m = greedy_split(&comps);
    assert_eq!(m.train, BTreeSet::from(["c0001".to_string(), "c0002".to_string()]));
    assert_eq!(m.test, BTreeSet::from(["c0003".to_string()]));
    assert!(coverage_violations(&m, &comps).is_empty());
    check_greedy(&comps, &m);
}

#[test]
fn single_composition_stays_in_train() {
    let comps = vec![composition(1, &["a", "b"])];
    let m = greedy_split(&comps);
    assert!(m.test.is_empty());
    assert_eq!(m.train.len(), 1);
}

#[test]
fn empty_input_gives_empty_split() {
    let m = greedy_split(&[]);
    assert!(m.train.is_empty() && m.test.is_empty());
}

#[test]
fn duplicate_component_sets_move_the_smaller_id() {
    let comps = vec![composition(1, &["a", "b"]), composition(2, &["a", "b"])];
    let m = greedy_split(&comps);
    assert_eq!(m.moves, vec!["c0001".to_string()]);
    assert!(coverage_violations(&m, &comps).is_empty());
}

#[test]
fn larger_eligible_composition_moves_first() {
    let comps = vec![
        composition(1, &["a"]),
        composition(2, &["a", "b", "c"]),
        composition(3, &["b", "c"]),
        composition(4, &["a", "b", "c"]),
    ];
    let m = greedy_split(&comps);
    check_greedy(&comps, &m);
    assert_eq!(m.moves[0], "c0002");
}

#[test]
fn eligibility_needs_a_second_occurrence() {
    let a = composition(1, &["x", "y"]);
    let counts: BTreeMap<&str, usize> = BTreeMap::from([("x", 2), ("y", 1)]);
    assert!(!is_eligible(&a, &counts));
    let counts: BTreeMap<&str, usize> = BTreeMap::from([("x", 2), ("y", 3)]);
    assert!(is_eligible(&a, &counts));
}

#[test]
fn greedy_matches_brute_force_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let comps = random_compositions(&mut rng);
        let m = greedy_split(&comps);
        check_greedy(&comps, &m);
        assert!(coverage_violations(&m, &comps).is_empty());
    }
}

proptest! {
    #[test]
    fn split_never_leaves_test_components_uncovered(seed in any::<u64>()) {
        let comps = random_compositions(&mut ChaCha8Rng::seed_from_u64(seed));
        let m = greedy_split(&comps);
        prop_assert!(coverage_violations(&m, &comps).is_empty());
        prop_assert_eq!(m.train.len() + m.test.len(), comps.len());
        prop_assert!(m.train.is_disjoint(&m.test));
    }

    #[test]
    fn graph_edges_are_exactly_shared_values(
        sets in proptest::collection::vec(proptest::collection::btree_set(0u8..6, 0..4), 0..10)
    ) {
        let values: Vec<BTreeSet<String>> = sets
            .iter()
            .map(|s| s.iter().map(|v| v.to_string()).collect())
            .collect();
        let ids = (0..values.len()).map(|i| format!("i{i}")).collect();
        let g = ContextGraph::from_values(ids, values.clone());
        let mut edges = 0;
        for a in 0..values.len() {
            for b in 0..values.len() {
                let shares = a != b && !values[a].is_disjoint(&values[b]);
                prop_assert_eq!(g.adjacency[a].contains(&b), shares);
                if shares && a < b {
                    edges += 1;
                }
            }
        }
        prop_assert_eq!(g.edge_count(), edges);
    }
}

#[test]
fn coverage_violation_is_reported() {
    let comps = vec![composition(1, &["a"]), composition(2, &["b"])];
    let manifest = SplitManifest {
        format_version: SPLIT_FORMAT_VERSION,
        mode: SplitMode::Compositional,
        train: BTreeSet::from(["c0001".to_string()]),
        test: BTreeSet::from(["c0002".to_string()]),
        moves: vec!["c0002".to_string()],
        stats: SplitStats::default(),
    };
    assert_eq!(coverage_violations(&manifest, &comps), vec!["c0002".to_string()]);
}

#[test]
fn mini_corpus_compositional_split() {
    let corpus = bundled_interactions();
    let out = split_corpus(&corpus, SplitMode::Compositional, 0.2, 0).unwrap();
    assert_eq!(out.compositions.len(), 26);
    assert!(coverage_violations(&out.manifest, &out.compositions).is_empty());
    check_greedy(&out.compositions, &out.manifest);
    let s = &out.manifest.stats;
    assert_eq!(
        (s.train_interactions, s.train_turns, s.train_templates),
        (110, 495, 22)
    );
    assert_eq!((s.test_interactions, s.test_turns, s.test_templates), (20, 135, 4));
    assert_eq!(out.manifest.moves, ["c0003", "c0001", "c0006", "c0022"]);
    assert_eq!(out.train.len() + out.test.len(), corpus.len());
    assert!(out.train.iter().all(|r| r.provenance.split_tags == ["train"]));
    assert!(out.test.iter().all(|r| r.provenance.split_tags == ["test"]));
    for c in &out.compositions {
        let in_test = out.manifest.test.contains(&c.composition_id);
        let side = if in_test { &out.test } else { &out.train };
        for m in &c.members {
            assert!(side.iter().any(|r| &r.interaction_id == m));
        }
    }
}

#[test]
fn compositions_are_numbered_by_first_appearance() {
    let corpus = bundled_interactions();
    let comps = build_compositions(&sources_of(&corpus).unwrap()).unwrap();
    let firsts: Vec<usize> = comps
        .iter()
        .map(|c| {
            corpus
                .iter()
                .position(|r| r.interaction_id == c.members[0])
                .unwrap()
        })
        .collect();
    assert!(firsts.windows(2).all(|w| w[0] < w[1]));
    for (i, c) in comps.iter().enumerate() {
        assert_eq!(c.composition_id, format!("c{:04}", i + 1));
        assert!(!c.component_set.is_empty());
    }
    let members: usize = comps.iter().map(|c| c.members.len()).sum();
    assert_eq!(members, corpus.len());
}

#[test]
fn random_split_ratio_and_determinism() {
    let corpus = bundled_interactions();
    let a = random_split(&corpus, 0.2, 5);
    let b = random_split(&corpus, 0.2, 5);
    let c = random_split(&corpus, 0.2, 6);
    assert_eq!(a, b);
    assert_ne!(a.test, c.test);
    assert_eq!(a.test.len(), 26);
    assert_eq!(a.train.len(), 104);
    assert!(a.train.is_disjoint(&a.test));
    let out = split_corpus(&corpus, SplitMode::Random, 0.2, 5).unwrap();
    assert_eq!(out.manifest.test, a.test);
    assert_eq!(out.manifest.stats.test_interactions, 26);
}

#[test]
fn split_mode_and_manifest_serialization() {
    assert_eq!("compositional".parse::<SplitMode>().unwrap(), SplitMode::Compositional);
    assert_eq!("random".parse::<SplitMode>().unwrap(), SplitMode::Random);
    assert!("other".parse::<SplitMode>().is_err());
    let corpus = bundled_interactions();
    let m = split_corpus(&corpus, SplitMode::Compositional, 0.2, 0).unwrap().manifest;
    let back: SplitManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn planted_overlap_graph() {
    let values = vec![
        BTreeSet::from(["'aspirin'".to_string()]),
        BTreeSet::from(["'aspirin'".to_string(), "1001".to_string()]),
        BTreeSet::from(["1001".to_string()]),
        BTreeSet::from(["'heparin'".to_string()]),
        BTreeSet::new(),
    ];
    let ids = (1..=5).map(|i| format!("i{i}")).collect();
    let g = ContextGraph::from_values(ids, values);
    assert_eq!(g.edge_count(), 2);
    assert_eq!(g.adjacency[0], BTreeSet::from([1]));
    assert_eq!(g.adjacency[1], BTreeSet::from([0, 2]));
    assert!(g.adjacency[3].is_empty() && g.adjacency[4].is_empty());
    assert_eq!(
        g.shared_values(1, 2).into_iter().cloned().collect::<Vec<_>>(),
        vec!["1001".to_string()]
    );
}

#[test]
fn condition_values_include_the_patient_and_skip_implied_columns() {
    let stmt = parse_sql(common::NATEGLINIDE_LIST).unwrap();
    let values = condition_values(&stmt);
    assert!(values.contains("'nateglinide'"), "{values:?}");
    let weight = parse_sql(common::ICU_WEIGHT_TURNS[1]).unwrap();
    let values = condition_values(&weight);
    assert!(values.contains("'admit wt'"), "{values:?}");
    assert!(!values.contains("'chartevents'"), "{values:?}");
    let lookup = parse_sql(common::ICU_WEIGHT_TURNS[0]).unwrap();
    assert!(condition_values(&lookup).contains("30826"));
}

#[test]
fn interactions_about_the_same_patient_are_linked() {
    let corpus = bundled_interactions();
    let g = build_context_graph(&corpus);
    assert_eq!(g.ids.len(), corpus.len());
    assert_eq!(g.edge_count(), 91);
    for a in 0..g.ids.len() {
        for &b in &g.adjacency[a] {
            assert!(!g.shared_values(a, b).is_empty());
            assert!(g.adjacency[b].contains(&a));
        }
    }
}

#[test]
fn zero_long_interactions_requested() {
    let corpus = bundled_interactions();
    let g = build_context_graph(&corpus);
    let out = generate_long_interactions(
        &corpus,
        &g,
        &LongConfig {
            count: 0,
            ..LongConfig::default()
        },
    );
    assert!(out.records.is_empty() && out.shortfalls.is_empty());
}

#[test]
fn edgeless_graph_reports_a_shortfall() {
    let corpus: Vec<_> = bundled_interactions().into_iter().take(1).collect();
    let g = build_context_graph(&corpus);
    let out = generate_long_interactions(&corpus, &g, &LongConfig::default());
    assert!(out.records.is_empty());
    assert_eq!(out.shortfalls.len(), 1);
}

#[test]
fn long_interactions_replay_and_keep_tokens_inside_segments() {
    let corpus = bundled_interactions();
    let by_id: BTreeMap<&str, &seqsql::io::InteractionRecord> =
        corpus.iter().map(|r| (r.interaction_id.as_str(), r)).collect();
    let g = build_context_graph(&corpus);
    let cfg = LongConfig {
        count: 25,
        min_turns: 14,
        seed: 3,
    };
    let out = generate_long_interactions(&corpus, &g, &cfg);
    assert_eq!(out.records.len(), 25);
    assert!(out.shortfalls.is_empty(), "{:?}", out.shortfalls);
    let again = generate_long_interactions(&corpus, &g, &cfg);
    assert_eq!(again.records, out.records);
    let db = common::synth_db_path(1000, 1);
    for r in &out.records {
        assert!(r.turns.len() >= 14);
        r.to_turns().unwrap();
        let segs = &r.provenance.segments;
        assert!(segs.len() >= 2);
        assert_eq!(segs.iter().collect::<BTreeSet<_>>().len(), segs.len());
        for w in segs.windows(2) {
            let a = g.ids.iter().position(|i| i == &w[0]).unwrap();
            let b = g.ids.iter().position(|i| i == &w[1]).unwrap();
            assert!(g.adjacency[a].contains(&b));
        }
        let mut offset = 0;
        for s in segs {
            let seg = by_id[s.as_str()];
            for (k, t) in seg.turns.iter().enumerate() {
                let turn = &r.turns[offset + k];
                assert_eq!(turn.index, t.index + offset);
                for tok in extract_token_refs(&parse_sql(&turn.sql).unwrap()) {
                    assert!(tok.turn > offset && tok.turn < turn.index);
                }
            }
            offset += seg.turns.len();
        }
        let outcomes = seqsql::session::replay_interaction(&db, &r.sql_texts()).unwrap();
        assert!(outcomes.iter().all(|o| o.is_ok()), "{}", r.interaction_id);
    }
}

#[test]
fn concatenation_shifts_question_references() {
    let corpus = bundled_interactions();
    let second = corpus
        .iter()
        .find(|r| r.turns.iter().any(|t| t.nlq.contains("result1")))
        .unwrap();
    let joined = concatenate("x", [&corpus[0], second]);
    let offset = corpus[0].turns.len();
    let shifted = format!("result{}", 1 + offset);
    let k = second
        .turns
        .iter()
        .position(|t| t.nlq.contains("result1"))
        .unwrap();
    assert!(joined.turns[offset + k].nlq.contains(&shifted));
    assert_eq!(joined.turns.len(), offset + second.turns.len());
    assert!(joined.goal_nlq.is_none());
}
