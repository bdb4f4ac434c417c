//! Execution-based scoring of predicted interactions: question match,
//! interaction match and index of first failure.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::InteractionRecord;
use crate::session::{is_ordered, results_match, Session, SessionError, TurnError};
use crate::sql::parse_select;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("index of first failure needs at least one turn")]
    EmptyInteraction,
    #[error("{interaction}: prediction turn indices are not contiguous from 1")]
    Gap { interaction: String },
    #[error("{interaction} turn {turn}: duplicate prediction")]
    Duplicate { interaction: String, turn: usize },
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Interaction history available to the model: previous questions only,
/// or previous questions with their SQL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistoryMode {
    #[serde(rename = "QQ")]
    Qq,
    #[serde(rename = "QS")]
    Qs,
}

impl std::str::FromStr for HistoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "QQ" => Ok(HistoryMode::Qq),
            "QS" => Ok(HistoryMode::Qs),
            other => Err(format!("unknown history mode '{other}'")),
        }
    }
}

impl std::fmt::Display for HistoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HistoryMode::Qq => "QQ",
            HistoryMode::Qs => "QS",
        })
    }
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub interaction_id: String,
    pub turn_index: usize,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionFile {
    pub mode: HistoryMode,
    pub records: BTreeMap<(String, usize), String>,
}

impl PredictionFile {
    /// Index predictions; per interaction the turn indices must run from 1
    /// without gaps.
    pub fn new(mode: HistoryMode, lines: Vec<Prediction>) -> Result<Self, EvalError> {
        let mut records = BTreeMap::new();
        for p in lines {
            let key = (p.interaction_id, p.turn_index);
            if records.contains_key(&key) {
                return Err(EvalError::Duplicate {
                    interaction: key.0,
                    turn: key.1,
                });
            }
            records.insert(key, p.sql);
        }
        let mut expected: BTreeMap<&str, usize> = BTreeMap::new();
        for (id, turn) in records.keys() {
            let next = expected.entry(id.as_str()).or_insert(1);
            if *turn != *next {
                return Err(EvalError::Gap {
                    interaction: id.clone(),
                });
            }
            *next += 1;
        }
        Ok(PredictionFile { mode, records })
    }

    /// Predictions equal to the gold SQL of every turn.
    pub fn from_gold(mode: HistoryMode, corpus: &[InteractionRecord]) -> Self {
        let records = corpus
            .iter()
            .flat_map(|r| {
                r.turns
                    .iter()
                    .map(|t| ((r.interaction_id.clone(), t.index), t.sql.clone()))
            })
            .collect();
        PredictionFile { mode, records }
    }

    pub fn get(&self, interaction: &str, turn: usize) -> Option<&str> {
        self.records
            .get(&(interaction.to_string(), turn))
            .map(String::as_str)
    }

    pub fn lines(&self) -> Vec<Prediction> {
        self.records
            .iter()
            .map(|((id, turn), sql)| Prediction {
                interaction_id: id.clone(),
                turn_index: *turn,
                sql: sql.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchReason {
    Missing,
    Parse,
    /// A referenced prediction turn had failed.
    Propagated,
    /// Tokens could not be resolved for another reason.
    Resolution,
    Execution,
    Result,
    /// The gold turn itself failed to execute.
    GoldFailed,
}

fn reason_of(e: &TurnError) -> MismatchReason {
    match e {
        TurnError::Parse { .. } => MismatchReason::Parse,
        TurnError::Propagated { .. } => MismatchReason::Propagated,
        TurnError::Database { .. } => MismatchReason::Execution,
        _ => MismatchReason::Resolution,
    }
}

/// Execute the next turn on both sides, each resolving its tokens against
/// its own history, and compare results. `None` means no prediction; the
/// prediction side still advances so later indices line up.
pub fn execution_match(
    pred: Option<&str>,
    gold: &str,
    gold_state: &mut Session,
    pred_state: &mut Session,
) -> Result<(), MismatchReason> {
    let gold_out = gold_state.execute_turn(gold).clone();
    let pred_out = pred_state.execute_turn(pred.unwrap_or(""));
    if pred.is_none() {
        return Err(MismatchReason::Missing);
    }
    let Ok(gold_rs) = &gold_out.result else {
        return Err(MismatchReason::GoldFailed);
    };
    let pred_rs = pred_out.result.as_ref().map_err(reason_of)?;
    let ordered = gold_out
        .resolved_sql
        .as_deref()
        .and_then(|s| parse_select(s).ok())
        .is_some_and(|s| is_ordered(&s));
    if results_match(pred_rs, gold_rs, ordered) {
        Ok(())
    } else {
        Err(MismatchReason::Result)
    }
}

/// Index of the first failure: `n + 1` if all `n` turns are correct,
/// otherwise the 1-based index of the first wrong turn.
pub fn iff(per_turn_correct: &[bool]) -> Result<usize, EvalError> {
    if per_turn_correct.is_empty() {
        return Err(EvalError::EmptyInteraction);
    }
    Ok(per_turn_correct
        .iter()
        .position(|c| !c)
        .map_or(per_turn_correct.len() + 1, |i| i + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionScore {
    pub interaction_id: String,
    pub correct: Vec<bool>,
    pub reasons: Vec<Option<MismatchReason>>,
    pub iff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: HistoryMode,
    pub qm: f64,
    pub im: f64,
    pub iff_mean: f64,
    pub n_interactions: usize,
    pub n_turns: usize,
    pub correct_turns: usize,
    pub excluded: usize,
    pub rows: Vec<InteractionScore>,
}

impl MetricsReport {
    pub fn from_rows(mode: HistoryMode, rows: Vec<InteractionScore>, excluded: usize) -> Self {
        let n_turns: usize = rows.iter().map(|r| r.correct.len()).sum();
        let correct_turns: usize = rows
            .iter()
            .map(|r| r.correct.iter().filter(|c| **c).count())
            .sum();
        let all_right = rows.iter().filter(|r| r.correct.iter().all(|c| *c)).count();
        let n = rows.len();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        MetricsReport {
            mode,
            qm: ratio(correct_turns, n_turns),
            im: ratio(all_right, n),
            iff_mean: if n == 0 {
                0.0
            } else {
                rows.iter().map(|r| r.iff as f64).sum::<f64>() / n as f64
            },
            n_interactions: n,
            n_turns,
            correct_turns,
            excluded,
            rows,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "mode {}\ninteractions {}  turns {}  excluded {}\nQM   {:.4} ({}/{})\nIM   {:.4}\nIFF  {:.4}\n",
            self.mode,
            self.n_interactions,
            self.n_turns,
            self.excluded,
            self.qm,
            self.correct_turns,
            self.n_turns,
            self.im,
            self.iff_mean
        );
        for r in self.rows.iter().filter(|r| r.correct.iter().any(|c| !c)) {
            let first = r.iff - 1;
            out.push_str(&format!(
                "  {} fails at turn {} ({:?})\n",
                r.interaction_id,
                r.iff,
                r.reasons[first].expect("failed turn has a reason")
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    /// Skip interactions longer than this many turns.
    pub max_turns: Option<usize>,
}

/// Score every gold interaction against the predictions on `db`.
pub fn score_corpus(
    preds: &PredictionFile,
    gold: &[InteractionRecord],
    db: &Path,
) -> Result<MetricsReport, EvalError> {
    score_corpus_with(preds, gold, db, &ScoreOptions::default())
}

pub fn score_corpus_with(
    preds: &PredictionFile,
    gold: &[InteractionRecord],
    db: &Path,
    options: &ScoreOptions,
) -> Result<MetricsReport, EvalError> {
    let mut rows = Vec::new();
    let mut excluded = 0;
    for record in gold {
        if options.max_turns.is_some_and(|m| record.turns.len() > m) {
            excluded += 1;
            continue;
        }
        rows.push(score_interaction(preds, record, db)?);
    }
    Ok(MetricsReport::from_rows(preds.mode, rows, excluded))
}

pub fn score_interaction(
    preds: &PredictionFile,
    record: &InteractionRecord,
    db: &Path,
) -> Result<InteractionScore, EvalError> {
    let mut gold_state = Session::open(db)?;
    let mut pred_state = Session::open(db)?;
    let mut correct = Vec::with_capacity(record.turns.len());
    let mut reasons = Vec::with_capacity(record.turns.len());
    for t in &record.turns {
        let pred = preds.get(&record.interaction_id, t.index);
        let outcome = execution_match(pred, &t.sql, &mut gold_state, &mut pred_state);
        correct.push(outcome.is_ok());
        reasons.push(outcome.err());
    }
    Ok(InteractionScore {
        interaction_id: record.interaction_id.clone(),
        iff: iff(&correct)?,
        correct,
        reasons,
    })
}
