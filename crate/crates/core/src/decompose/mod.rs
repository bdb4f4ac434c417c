//! Turning one standalone query into a sequence of token-linked turns.
//!
//! Nesting is split first (innermost subqueries become the earliest turns),
//! then each resulting query is split by clause, and finally a corpus-level
//! pass re-fuses adjacent turns whose template pair is frequent.

mod clauses;
mod merge;
mod nesting;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sql::{
    extract_token_refs, map_site_tokens, mask_statement, parse_select, parse_sql, render_select,
    render_sql, rewrite_tokens, MaskConfig, MaskPolicy, Replacement, Select, SqlError, Statement,
    TokenRef,
};

pub use clauses::decompose_clauses;
pub use merge::{merge_frequent, MergeConfig, MergeReport};
pub use nesting::decompose_nesting;

const ATOMIC_TEMPLATES: &str = include_str!("../../data/atomic_templates.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Stage1,
    Stage2,
    Merged,
    Atomic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnSql {
    pub index: usize,
    pub stmt: Statement,
    pub origin: Origin,
}

impl TurnSql {
    pub fn new(index: usize, stmt: impl Into<Statement>, origin: Origin) -> Self {
        TurnSql {
            index,
            stmt: stmt.into(),
            origin,
        }
    }

    pub fn sql(&self) -> String {
        render_sql(&self.stmt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionPlan {
    pub id: String,
    pub source: Select,
    pub turns: Vec<TurnSql>,
}

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error("unsupported nesting: {0}")]
    Unsupported(String),
    #[error("turn {turn} references turn {target}, which is not an earlier turn")]
    Dangling { turn: usize, target: usize },
    #[error("turn index {index} out of range 1..={len}")]
    OutOfRange { index: usize, len: usize },
    #[error("turn {0} is not a standalone SELECT")]
    NotSelect(usize),
}

#[derive(Debug, Clone)]
pub struct DecomposeConfig {
    /// Keep the first WHERE conjunct group with the base SELECT.
    pub fuse_first_predicate: bool,
    /// `table.column` names whose predicates always ride with the preceding
    /// conjunct group.
    pub fused_columns: Vec<String>,
    /// BPE-masked texts of queries that are never decomposed.
    pub atomic_templates: Vec<String>,
    pub mask: MaskConfig,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            fuse_first_predicate: true,
            fused_columns: vec!["d_items.linksto".to_string()],
            atomic_templates: parse_atomic_templates(ATOMIC_TEMPLATES),
            mask: MaskConfig::new(MaskPolicy::Bpe),
        }
    }
}

impl DecomposeConfig {
    pub fn is_atomic(&self, select: &Select) -> bool {
        let text = bpe_text(&Statement::from(select.clone()), &self.mask);
        self.atomic_templates.contains(&text)
    }
}

/// One template per non-empty, non-comment line.
pub fn parse_atomic_templates(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

pub(crate) fn bpe_text(stmt: &Statement, mask: &MaskConfig) -> String {
    let config = MaskConfig {
        policy: MaskPolicy::Bpe,
        ..mask.clone()
    };
    mask_statement(stmt, &config).text
}

/// Stages 1 and 2 for one query.
pub fn decompose_pipeline(
    id: &str,
    source: &Select,
    config: &DecomposeConfig,
) -> Result<DecompositionPlan, DecomposeError> {
    let turns = if config.is_atomic(source) {
        nesting::ensure_token_free(source)?;
        vec![TurnSql::new(1, source.clone(), Origin::Atomic)]
    } else {
        let stage1 = decompose_nesting(source)?;
        expand_clauses(&stage1, config)?
    };
    validate_turns(&turns)?;
    Ok(DecompositionPlan {
        id: id.to_string(),
        source: source.clone(),
        turns,
    })
}

/// Apply clause decomposition to every Stage-1 turn and renumber tokens so
/// each Stage-1 reference points at the last sub-turn of its target.
pub fn expand_clauses(
    stage1: &[TurnSql],
    config: &DecomposeConfig,
) -> Result<Vec<TurnSql>, DecomposeError> {
    let mut out: Vec<TurnSql> = Vec::new();
    let mut last = vec![0usize; stage1.len() + 1];
    for turn in stage1 {
        let select = turn
            .stmt
            .as_select()
            .ok_or(DecomposeError::NotSelect(turn.index))?;
        let offset = out.len();
        for mut sub in decompose_clauses(select, config) {
            // Later SELECT sub-turns are aggregation steps whose only token
            // is a local reference to the preceding sub-turn.
            let local = sub.index > 1 && matches!(sub.stmt, Statement::Select(_));
            map_site_tokens(&mut sub.stmt, &mut |t| TokenRef {
                kind: t.kind,
                turn: if local { t.turn + offset } else { last[t.turn] },
            });
            if let Statement::Refine(r) = &mut sub.stmt {
                r.base += offset;
            }
            sub.index += offset;
            out.push(sub);
        }
        last[turn.index] = out.len();
    }
    Ok(out)
}

/// Indices are contiguous from 1 and every token points strictly backward.
pub fn validate_turns(turns: &[TurnSql]) -> Result<(), DecomposeError> {
    for (i, t) in turns.iter().enumerate() {
        if t.index != i + 1 {
            return Err(DecomposeError::OutOfRange {
                index: t.index,
                len: turns.len(),
            });
        }
        for tok in extract_token_refs(&t.stmt) {
            if tok.turn == 0 || tok.turn >= t.index {
                return Err(DecomposeError::Dangling {
                    turn: t.index,
                    target: tok.turn,
                });
            }
        }
    }
    Ok(())
}

/// Replace every token of turn `index` by the referenced turn's query text,
/// recursively, yielding the standalone equivalent.
pub fn inline_all(turns: &[TurnSql], index: usize) -> Result<Select, DecomposeError> {
    let mut memo = HashMap::new();
    inline_rec(turns, index, &mut memo)
}

fn inline_rec(
    turns: &[TurnSql],
    index: usize,
    memo: &mut HashMap<usize, Select>,
) -> Result<Select, DecomposeError> {
    if index == 0 || index > turns.len() {
        return Err(DecomposeError::OutOfRange {
            index,
            len: turns.len(),
        });
    }
    if let Some(s) = memo.get(&index) {
        return Ok(s.clone());
    }
    let stmt = &turns[index - 1].stmt;
    let resolved = rewrite_tokens(
        stmt,
        &mut |tok, _| {
            if tok.turn == 0 || tok.turn >= index {
                return Err(DecomposeError::Dangling {
                    turn: index,
                    target: tok.turn,
                });
            }
            Ok(Replacement::Query(inline_rec(turns, tok.turn, memo)?))
        },
        &|tok, _| DecomposeError::Dangling {
            turn: index,
            target: tok.turn,
        },
    )?;
    memo.insert(index, resolved.clone());
    Ok(resolved)
}

pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub format_version: u32,
    pub id: String,
    pub source: String,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub sql: String,
    pub origin: Origin,
}

impl DecompositionPlan {
    pub fn to_record(&self) -> PlanRecord {
        PlanRecord {
            format_version: PLAN_FORMAT_VERSION,
            id: self.id.clone(),
            source: render_select(&self.source),
            turns: self
                .turns
                .iter()
                .map(|t| TurnRecord {
                    index: t.index,
                    sql: t.sql(),
                    origin: t.origin,
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &PlanRecord) -> Result<Self, DecomposeError> {
        let turns = rec
            .turns
            .iter()
            .map(|t| Ok(TurnSql::new(t.index, parse_sql(&t.sql)?, t.origin)))
            .collect::<Result<Vec<_>, DecomposeError>>()?;
        validate_turns(&turns)?;
        Ok(DecompositionPlan {
            id: rec.id.clone(),
            source: parse_select(&rec.source)?,
            turns,
        })
    }
}
