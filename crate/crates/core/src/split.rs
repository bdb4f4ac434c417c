//! Compositional train/test splits and longer interactions assembled from
//! related ones.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{decompose_pipeline, DecomposeConfig, DecomposeError};
use crate::io::{InteractionRecord, InteractionTurn, Provenance, INTERACTION_FORMAT_VERSION};
use crate::nlq::implied_values;
use crate::sql::{
    map_tokens, mask_statement, parse_select, parse_sql, render_sql, MaskConfig, MaskPolicy,
    Select, SlotClause, SlotRole, Statement, TokenRef,
};

pub const SPLIT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("{id}: {source}")]
    Decompose {
        id: String,
        source: DecomposeError,
    },
    #[error("{0} has no source query")]
    NoSource(String),
}

/// One interaction goal template and the clause templates it is built of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionRecord {
    pub composition_id: String,
    pub composition_template: String,
    pub component_set: BTreeSet<String>,
    pub members: Vec<String>,
}

/// Decomposition used for components: every conjunct group peeled,
/// including the first.
pub fn component_config() -> DecomposeConfig {
    DecomposeConfig {
        fuse_first_predicate: false,
        ..DecomposeConfig::default()
    }
}

fn composition_mask() -> MaskConfig {
    MaskConfig::new(MaskPolicy::Composition)
}

/// Composition template of a source query.
pub fn composition_template(source: &Select) -> String {
    mask_statement(&Statement::from(source.clone()), &composition_mask()).text
}

/// Component templates of a source query.
pub fn component_set(
    id: &str,
    source: &Select,
    config: &DecomposeConfig,
) -> Result<BTreeSet<String>, DecomposeError> {
    let mask = composition_mask();
    let plan = decompose_pipeline(id, source, config)?;
    Ok(plan
        .turns
        .iter()
        .map(|t| mask_statement(&t.stmt, &mask).text)
        .collect())
}

/// One record per distinct composition template, numbered in order of
/// first appearance.
pub fn build_compositions(
    sources: &[(String, Select)],
) -> Result<Vec<CompositionRecord>, SplitError> {
    let config = component_config();
    let mut records: Vec<CompositionRecord> = Vec::new();
    let mut by_template: BTreeMap<String, usize> = BTreeMap::new();
    for (id, source) in sources {
        let template = composition_template(source);
        let components = component_set(id, source, &config).map_err(|e| SplitError::Decompose {
            id: id.clone(),
            source: e,
        })?;
        let k = *by_template.entry(template.clone()).or_insert_with(|| {
            records.push(CompositionRecord {
                composition_id: format!("c{:04}", records.len() + 1),
                composition_template: template,
                component_set: BTreeSet::new(),
                members: Vec::new(),
            });
            records.len() - 1
        });
        records[k].component_set.extend(components);
        records[k].members.push(id.clone());
    }
    Ok(records)
}

/// Source queries of interaction records.
pub fn sources_of(corpus: &[InteractionRecord]) -> Result<Vec<(String, Select)>, SplitError> {
    corpus
        .iter()
        .map(|r| {
            let source = r
                .source_select()
                .ok_or_else(|| SplitError::NoSource(r.interaction_id.clone()))?
                .map_err(|e| SplitError::Decompose {
                    id: r.interaction_id.clone(),
                    source: e,
                })?;
            Ok((r.interaction_id.clone(), source))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Random,
    Compositional,
}

impl std::str::FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(SplitMode::Random),
            "compositional" => Ok(SplitMode::Compositional),
            other => Err(format!("unknown split mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub train_interactions: usize,
    pub test_interactions: usize,
    pub train_turns: usize,
    pub test_turns: usize,
    pub train_templates: usize,
    pub test_templates: usize,
}

/// Train/test partition. Ids are composition ids in compositional mode
/// and interaction ids in random mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format_version: u32,
    pub mode: SplitMode,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    /// Order in which compositions moved to the test side.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moves: Vec<String>,
    #[serde(default)]
    pub stats: SplitStats,
}

fn component_counts<'a>(
    compositions: impl Iterator<Item = &'a CompositionRecord>,
) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for c in compositions {
        for comp in &c.component_set {
            *counts.entry(comp.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// Whether moving `c` out of a training side with component `counts`
/// keeps every component of `c` covered.
pub fn is_eligible(c: &CompositionRecord, counts: &BTreeMap<&str, usize>) -> bool {
    c.component_set
        .iter()
        .all(|comp| counts.get(comp.as_str()).copied().unwrap_or(0) >= 2)
}

/// Start with everything in train; each round move the eligible
/// composition with the most components to test (ties: smallest id).
pub fn greedy_split(compositions: &[CompositionRecord]) -> SplitManifest {
    let mut train: BTreeMap<&str, &CompositionRecord> = compositions
        .iter()
        .map(|c| (c.composition_id.as_str(), c))
        .collect();
    let mut moves = Vec::new();
    loop {
        let counts = component_counts(train.values().copied());
        let best = train
            .values()
            .filter(|c| is_eligible(c, &counts))
            .max_by(|a, b| {
                a.component_set
                    .len()
                    .cmp(&b.component_set.len())
                    .then_with(|| b.composition_id.cmp(&a.composition_id))
            });
        let Some(best) = best else { break };
        let id = best.composition_id.clone();
        train.remove(id.as_str());
        moves.push(id);
    }
    SplitManifest {
        format_version: SPLIT_FORMAT_VERSION,
        mode: SplitMode::Compositional,
        train: train.keys().map(|k| k.to_string()).collect(),
        test: moves.iter().cloned().collect(),
        moves,
        stats: SplitStats::default(),
    }
}

/// Test compositions with a component absent from every train composition.
pub fn coverage_violations(
    manifest: &SplitManifest,
    compositions: &[CompositionRecord],
) -> Vec<String> {
    let covered: BTreeSet<&str> = compositions
        .iter()
        .filter(|c| manifest.train.contains(&c.composition_id))
        .flat_map(|c| c.component_set.iter().map(String::as_str))
        .collect();
    compositions
        .iter()
        .filter(|c| manifest.test.contains(&c.composition_id))
        .filter(|c| !c.component_set.iter().all(|x| covered.contains(x.as_str())))
        .map(|c| c.composition_id.clone())
        .collect()
}

/// Seeded interaction-level split with `round(ratio * n)` test records.
pub fn random_split(corpus: &[InteractionRecord], test_ratio: f64, seed: u64) -> SplitManifest {
    let mut ids: Vec<String> = corpus.iter().map(|r| r.interaction_id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((ids.len() as f64) * test_ratio.clamp(0.0, 1.0)).round() as usize;
    let test: BTreeSet<String> = ids[..n_test].iter().cloned().collect();
    let train: BTreeSet<String> = ids[n_test..].iter().cloned().collect();
    SplitManifest {
        format_version: SPLIT_FORMAT_VERSION,
        mode: SplitMode::Random,
        train,
        test,
        moves: Vec::new(),
        stats: SplitStats::default(),
    }
}

/// Train and test interactions of a split, tagged with their side.
#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub manifest: SplitManifest,
    pub compositions: Vec<CompositionRecord>,
    pub train: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
}

/// Split a corpus and fill in the manifest statistics.
pub fn split_corpus(
    corpus: &[InteractionRecord],
    mode: SplitMode,
    test_ratio: f64,
    seed: u64,
) -> Result<SplitOutput, SplitError> {
    let compositions = build_compositions(&sources_of(corpus)?)?;
    let mut manifest = match mode {
        SplitMode::Compositional => greedy_split(&compositions),
        SplitMode::Random => random_split(corpus, test_ratio, seed),
    };
    let side_of: BTreeMap<&str, bool> = match mode {
        SplitMode::Compositional => compositions
            .iter()
            .flat_map(|c| {
                let test = manifest.test.contains(&c.composition_id);
                c.members.iter().map(move |m| (m.as_str(), test))
            })
            .collect(),
        SplitMode::Random => corpus
            .iter()
            .map(|r| (r.interaction_id.as_str(), manifest.test.contains(&r.interaction_id)))
            .collect(),
    };
    let template_of: BTreeMap<&str, &str> = compositions
        .iter()
        .flat_map(|c| c.members.iter().map(|m| (m.as_str(), c.composition_template.as_str())))
        .collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut templates = [BTreeSet::new(), BTreeSet::new()];
    for r in corpus {
        let is_test = side_of[r.interaction_id.as_str()];
        let mut r = r.clone();
        r.provenance
            .split_tags
            .push(if is_test { "test" } else { "train" }.to_string());
        templates[usize::from(is_test)].insert(template_of[r.interaction_id.as_str()]);
        if is_test {
            test.push(r);
        } else {
            train.push(r);
        }
    }
    let turns = |rs: &[InteractionRecord]| rs.iter().map(|r| r.turns.len()).sum();
    manifest.stats = SplitStats {
        train_interactions: train.len(),
        test_interactions: test.len(),
        train_turns: turns(&train),
        test_turns: turns(&test),
        train_templates: templates[0].len(),
        test_templates: templates[1].len(),
    };
    Ok(SplitOutput {
        manifest,
        compositions,
        train,
        test,
    })
}

/// Interactions linked by shared condition values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextGraph {
    pub ids: Vec<String>,
    /// Condition values of each interaction, as canonical literals.
    pub values: Vec<BTreeSet<String>>,
    pub adjacency: Vec<BTreeSet<usize>>,
}

impl ContextGraph {
    pub fn from_values(ids: Vec<String>, values: Vec<BTreeSet<String>>) -> Self {
        let mut holders: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, vs) in values.iter().enumerate() {
            for v in vs {
                holders.entry(v.as_str()).or_default().push(i);
            }
        }
        let mut adjacency = vec![BTreeSet::new(); ids.len()];
        for group in holders.values() {
            for &a in group {
                for &b in group {
                    if a != b {
                        adjacency[a].insert(b);
                    }
                }
            }
        }
        ContextGraph {
            ids,
            values,
            adjacency,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn shared_values(&self, a: usize, b: usize) -> BTreeSet<&String> {
        self.values[a].intersection(&self.values[b]).collect()
    }
}

/// Values compared with columns in WHERE or JOIN conditions, excluding
/// implied columns.
pub fn condition_values(stmt: &Statement) -> BTreeSet<String> {
    let implied = implied_values(stmt);
    mask_statement(stmt, &composition_mask())
        .slots_with_role(SlotRole::Value)
        .filter(|s| matches!(s.clause, SlotClause::Where | SlotClause::Join))
        .map(|s| s.value.clone())
        .filter(|v| !implied.contains(v))
        .collect()
}

fn record_values(r: &InteractionRecord) -> BTreeSet<String> {
    if let Some(Ok(source)) = r.source_select() {
        return condition_values(&Statement::from(source));
    }
    r.turns
        .iter()
        .filter_map(|t| parse_sql(&t.sql).ok())
        .flat_map(|s| condition_values(&s))
        .collect()
}

pub fn build_context_graph(corpus: &[InteractionRecord]) -> ContextGraph {
    ContextGraph::from_values(
        corpus.iter().map(|r| r.interaction_id.clone()).collect(),
        corpus.iter().map(record_values).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongConfig {
    pub count: usize,
    /// Segments are appended until the record has at least this many turns.
    pub min_turns: usize,
    pub seed: u64,
}

impl Default for LongConfig {
    fn default() -> Self {
        LongConfig {
            count: 100,
            min_turns: 14,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LongOutput {
    pub records: Vec<InteractionRecord>,
    /// Records that stopped short of `min_turns` for lack of unused
    /// neighbours.
    pub shortfalls: Vec<String>,
}

/// Seeded walks over the context graph. Each step appends an unused
/// interaction sharing a value with the previous segment; token indices of
/// later segments are shifted by the preceding turn count. A walk that gets
/// stuck is retried, keeping the longest attempt.
pub fn generate_long_interactions(
    corpus: &[InteractionRecord],
    graph: &ContextGraph,
    config: &LongConfig,
) -> LongOutput {
    let mut out = LongOutput::default();
    let starts: Vec<usize> = (0..corpus.len())
        .filter(|&i| !graph.adjacency[i].is_empty())
        .collect();
    if starts.is_empty() || config.count == 0 {
        if config.count > 0 {
            out.shortfalls.push("graph has no edges".to_string());
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for n in 0..config.count {
        let mut best: (Vec<usize>, usize) = (Vec::new(), 0);
        for _ in 0..WALK_ATTEMPTS {
            let walk = random_walk(corpus, graph, &starts, config.min_turns, &mut rng);
            if walk.1 > best.1 {
                best = walk;
            }
            if best.1 >= config.min_turns {
                break;
            }
        }
        let (path, turns) = best;
        let id = format!("long{:04}", n + 1);
        if turns < config.min_turns {
            out.shortfalls.push(format!("{id}: {turns} turns"));
        }
        out.records.push(concatenate(&id, path.iter().map(|&k| &corpus[k])));
    }
    out
}

const WALK_ATTEMPTS: usize = 20;

fn random_walk(
    corpus: &[InteractionRecord],
    graph: &ContextGraph,
    starts: &[usize],
    min_turns: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, usize) {
    let mut path = vec![*starts.choose(rng).expect("non-empty")];
    let mut turns = corpus[path[0]].turns.len();
    while turns < min_turns {
        let last = *path.last().expect("non-empty");
        let next: Vec<usize> = graph.adjacency[last]
            .iter()
            .copied()
            .filter(|k| !path.contains(k))
            .collect();
        let Some(&k) = next.choose(rng) else { break };
        turns += corpus[k].turns.len();
        path.push(k);
    }
    (path, turns)
}

/// Concatenate interactions, shifting token indices by per-segment offsets.
pub fn concatenate<'a>(
    id: &str,
    segments: impl IntoIterator<Item = &'a InteractionRecord>,
) -> InteractionRecord {
    let mut turns = Vec::new();
    let mut members = Vec::new();
    for seg in segments {
        let offset = turns.len();
        members.push(seg.interaction_id.clone());
        for t in &seg.turns {
            let sql = match parse_sql(&t.sql) {
                Ok(mut stmt) => {
                    map_tokens(&mut stmt, &mut |r| TokenRef {
                        kind: r.kind,
                        turn: r.turn + offset,
                    });
                    render_sql(&stmt)
                }
                Err(_) => t.sql.clone(),
            };
            turns.push(InteractionTurn {
                index: t.index + offset,
                nlq: shift_references(&t.nlq, offset),
                sql,
                origin: t.origin,
                categories: t.categories.clone(),
            });
        }
    }
    InteractionRecord {
        format_version: INTERACTION_FORMAT_VERSION,
        interaction_id: id.to_string(),
        goal_nlq: None,
        turns,
        provenance: Provenance {
            segments: members,
            ..Provenance::default()
        },
    }
}

/// Shift the `result{i}` references of a question by `offset`.
fn shift_references(nlq: &str, offset: usize) -> String {
    static RESULT: std::sync::LazyLock<regex::Regex> =
        std::sync::LazyLock::new(|| regex::Regex::new(r"\bresult(\d+)\b").expect("static pattern"));
    if offset == 0 {
        return nlq.to_string();
    }
    RESULT
        .replace_all(nlq, |c: &regex::Captures| {
            let i: usize = c[1].parse().expect("digits");
            format!("result{}", i + offset)
        })
        .into_owned()
}

/// Parse a source query, for callers holding raw text.
pub fn parse_source(id: &str, sql: &str) -> Result<(String, Select), SplitError> {
    parse_select(sql)
        .map(|s| (id.to_string(), s))
        .map_err(|e| SplitError::Decompose {
            id: id.to_string(),
            source: e.into(),
        })
}
