//! Few-shot prompt construction: BM25 retrieval of exemplar turns and
//! interactions, and QQ/QS prompt assembly.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::eval::HistoryMode;
use crate::io::InteractionRecord;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Okapi BM25 over whitespace-separated, lowercased terms.
#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    terms: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    document_frequency: HashMap<String, usize>,
    average_length: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut index = Bm25Index::default();
        for d in docs {
            let tokens = tokenize(d.as_ref());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for t in tf.keys() {
                *index.document_frequency.entry(t.clone()).or_insert(0) += 1;
            }
            index.lengths.push(tokens.len());
            index.terms.push(tf);
        }
        let total: usize = index.lengths.iter().sum();
        index.average_length = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        index
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.document_frequency.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    pub fn score(&self, query: &[String], doc: usize) -> f64 {
        let tf = &self.terms[doc];
        let norm = if self.average_length > 0.0 {
            self.lengths[doc] as f64 / self.average_length
        } else {
            0.0
        };
        query
            .iter()
            .map(|q| {
                let f = tf.get(q).copied().unwrap_or(0) as f64;
                if f == 0.0 {
                    return 0.0;
                }
                self.idf(q) * f * (BM25_K1 + 1.0) / (f + BM25_K1 * (1.0 - BM25_B + BM25_B * norm))
            })
            .sum()
    }

    /// Every document ranked by descending score, ties by position.
    pub fn rank(&self, query: &str) -> Vec<(usize, f64)> {
        let q = tokenize(query);
        let mut ranked: Vec<(usize, f64)> = (0..self.len()).map(|d| (d, self.score(&q, d))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEntry {
    pub question: String,
    pub sql: String,
    pub interaction_id: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEntry {
    pub interaction_id: String,
    pub questions: Vec<String>,
    pub sqls: Vec<String>,
}

impl InteractionEntry {
    /// Accumulated question text indexed for retrieval.
    pub fn text(&self) -> String {
        self.questions.join(" ")
    }
}

/// Turn-level and interaction-level retrieval corpora.
#[derive(Debug, Clone, Default)]
pub struct ExemplarCorpus {
    pub turn_level: Vec<TurnEntry>,
    pub interaction_level: Vec<InteractionEntry>,
    turn_index: Bm25Index,
    interaction_index: Bm25Index,
}

impl ExemplarCorpus {
    pub fn build(train: &[InteractionRecord]) -> Self {
        let turn_level: Vec<TurnEntry> = train
            .iter()
            .flat_map(|r| {
                r.turns.iter().map(|t| TurnEntry {
                    question: t.nlq.clone(),
                    sql: t.sql.clone(),
                    interaction_id: r.interaction_id.clone(),
                    turn_index: t.index,
                })
            })
            .collect();
        let interaction_level: Vec<InteractionEntry> = train
            .iter()
            .filter(|r| !r.turns.is_empty())
            .map(|r| InteractionEntry {
                interaction_id: r.interaction_id.clone(),
                questions: r.turns.iter().map(|t| t.nlq.clone()).collect(),
                sqls: r.turns.iter().map(|t| t.sql.clone()).collect(),
            })
            .collect();
        let turn_texts: Vec<&str> = turn_level.iter().map(|t| t.question.as_str()).collect();
        let interaction_texts: Vec<String> =
            interaction_level.iter().map(InteractionEntry::text).collect();
        ExemplarCorpus {
            turn_index: Bm25Index::new(&turn_texts),
            interaction_index: Bm25Index::new(&interaction_texts),
            turn_level,
            interaction_level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    History,
    Turn,
}

/// A retrieved example: a question sequence whose last question is the
/// target, with the SQL of each question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub route: Route,
    pub interaction_id: String,
    pub turn_index: usize,
    pub questions: Vec<String>,
    pub sqls: Vec<String>,
    pub score: f64,
}

impl Exemplar {
    fn key(&self) -> (String, usize) {
        (self.interaction_id.clone(), self.turn_index)
    }
}

pub const DEFAULT_K: usize = 10;

/// Top `k_history` interactions for the joined history and top `k_turn`
/// turns for the current question. An exemplar found by both routes is
/// kept once; shortfalls on either route are backfilled by rank from the
/// remaining candidates, history route first.
pub fn retrieve_exemplars(
    question: &str,
    history: &[String],
    corpus: &ExemplarCorpus,
    k_history: usize,
    k_turn: usize,
) -> Vec<Exemplar> {
    let history_ranked: Vec<Exemplar> = if history.iter().all(|h| h.trim().is_empty()) {
        Vec::new()
    } else {
        corpus
            .interaction_index
            .rank(&history.join(" "))
            .into_iter()
            .map(|(d, score)| {
                let e = &corpus.interaction_level[d];
                Exemplar {
                    route: Route::History,
                    interaction_id: e.interaction_id.clone(),
                    turn_index: e.questions.len(),
                    questions: e.questions.clone(),
                    sqls: e.sqls.clone(),
                    score,
                }
            })
            .collect()
    };
    let turn_ranked: Vec<Exemplar> = corpus
        .turn_index
        .rank(question)
        .into_iter()
        .map(|(d, score)| {
            let e = &corpus.turn_level[d];
            Exemplar {
                route: Route::Turn,
                interaction_id: e.interaction_id.clone(),
                turn_index: e.turn_index,
                questions: vec![e.question.clone()],
                sqls: vec![e.sql.clone()],
                score,
            }
        })
        .collect();

    let mut chosen: Vec<Exemplar> = Vec::new();
    let mut seen: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut cursors = [0usize, 0usize];
    let routes = [&history_ranked, &turn_ranked];
    let mut take = |route: usize, want: usize, chosen: &mut Vec<Exemplar>| {
        let mut got = 0;
        while got < want && cursors[route] < routes[route].len() {
            let e = &routes[route][cursors[route]];
            cursors[route] += 1;
            if seen.insert(e.key()) {
                chosen.push(e.clone());
                got += 1;
            }
        }
    };
    take(0, k_history, &mut chosen);
    take(1, k_turn, &mut chosen);
    let budget = k_history + k_turn;
    take(0, budget - chosen.len(), &mut chosen);
    take(1, budget - chosen.len(), &mut chosen);
    chosen
}

/// The interaction being continued.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentInteraction {
    /// Earlier questions, each with its SQL when known.
    pub history: Vec<(String, Option<String>)>,
    pub question: String,
}

pub const TOKEN_NOTE: &str = "PREV_QUERY{i} stands for the SQL query of turn i and can be extended with further clauses. PREV_RESULT{i} stands for the execution result of turn i and can be used wherever a value or a list of values is expected.";

/// `table(column, ...)` lines describing the synthetic schema.
pub fn schema_description() -> String {
    crate::synth::SCHEMA
        .lines()
        .filter_map(|l| {
            let rest = l.trim().strip_prefix("CREATE TABLE ")?;
            let (name, cols) = rest.split_once(" (")?;
            let cols: Vec<&str> = cols
                .trim_end_matches(");")
                .split(", ")
                .filter_map(|c| c.split_whitespace().next())
                .collect();
            Some(format!("{name}({})", cols.join(", ")))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Assemble a prompt: schema, optional token note, exemplars (QS shows the
/// SQL of every exemplar question, QQ only the target's), then the current
/// history and question.
pub fn build_prompt(
    mode: HistoryMode,
    exemplars: &[Exemplar],
    current: &CurrentInteraction,
    token_note: bool,
) -> String {
    let mut out = String::new();
    out.push_str("Translate the last question into SQL for this database.\n\n### Schema\n");
    out.push_str(&schema_description());
    out.push('\n');
    if token_note {
        out.push_str("\n### Special tokens\n");
        out.push_str(TOKEN_NOTE);
        out.push('\n');
    }
    if !exemplars.is_empty() {
        out.push_str("\n### Examples\n");
        for (n, e) in exemplars.iter().enumerate() {
            out.push_str(&format!("\nExample {}\n", n + 1));
            let last = e.questions.len().saturating_sub(1);
            for (i, (q, s)) in e.questions.iter().zip(&e.sqls).enumerate() {
                out.push_str(&format!("Q: {q}\n"));
                if mode == HistoryMode::Qs || i == last {
                    out.push_str(&format!("SQL: {s}\n"));
                }
            }
        }
    }
    out.push_str("\n### Current interaction\n");
    for (q, s) in &current.history {
        out.push_str(&format!("Q: {q}\n"));
        if let (HistoryMode::Qs, Some(s)) = (mode, s) {
            out.push_str(&format!("SQL: {s}\n"));
        }
    }
    out.push_str(&format!("Q: {}\nSQL:", current.question));
    out
}
