//! Masked SQL templates: canonical text with selected spans replaced by
//! placeholders, plus the slot list needed to restore them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Statement};
use super::render::Writer;
use super::visit::collect_columns;

pub const DEFAULT_TEMPORAL_COLUMNS: &[&str] = &[
    "admittime",
    "dischtime",
    "charttime",
    "startdate",
    "enddate",
    "dob",
    "dod",
    "intime",
    "outtime",
    "chargetime",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaskPolicy {
    /// Condition values and tokens.
    Bpe,
    /// Additionally aggregates, comparisons, time filters and age groups.
    Composition,
    /// Additionally table and column names, values abstracted uniformly.
    NlqNorm,
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskPolicy::Bpe => "BPE",
            MaskPolicy::Composition => "COMPOSITION",
            MaskPolicy::NlqNorm => "NLQ_NORM",
        })
    }
}

impl FromStr for MaskPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "BPE" => Ok(MaskPolicy::Bpe),
            "COMPOSITION" => Ok(MaskPolicy::Composition),
            "NLQ_NORM" | "NLQNORM" => Ok(MaskPolicy::NlqNorm),
            other => Err(format!("unknown mask policy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskConfig {
    pub policy: MaskPolicy,
    pub temporal_columns: Vec<String>,
    pub age_columns: Vec<String>,
}

impl MaskConfig {
    pub fn new(policy: MaskPolicy) -> Self {
        MaskConfig {
            policy,
            temporal_columns: DEFAULT_TEMPORAL_COLUMNS.iter().map(|s| s.to_string()).collect(),
            age_columns: vec!["age".to_string()],
        }
    }

    pub fn is_temporal_column(&self, name: &str) -> bool {
        self.temporal_columns.iter().any(|c| c == name)
    }

    /// A temporal column, or a function over exactly one temporal column.
    pub fn is_temporal_expr(&self, e: &Expr) -> bool {
        match collect_columns(e) {
            Some(cols) => {
                !cols.is_empty() && cols.iter().all(|c| self.is_temporal_column(&c.name))
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Value,
    Token,
    Aggregate,
    Comparison,
    Rank,
    Times,
    TimeGlobal,
    TimeExact,
    TimeWithin,
    AgeGroup,
    Table,
    Column,
}

/// Clause in which a slot occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotClause {
    Select,
    From,
    Join,
    Where,
    GroupBy,
    Having,
    OrderBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub placeholder: String,
    /// Canonical text the placeholder stands for.
    pub value: String,
    pub role: SlotRole,
    pub clause: SlotClause,
    /// Full `table.column` text for column slots; the table name for
    /// table slots naming a base table (absent for aliases and qualifiers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlTemplate {
    pub policy: MaskPolicy,
    pub text: String,
    pub slots: Vec<Slot>,
}

impl SqlTemplate {
    pub fn unmask(&self) -> String {
        unmask(&self.text, &self.slots)
    }

    pub fn slots_with_role(&self, role: SlotRole) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(move |s| s.role == role)
    }
}

impl fmt::Display for SqlTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub fn mask_statement(stmt: &Statement, config: &MaskConfig) -> SqlTemplate {
    let mut w = Writer::masked(config);
    w.statement(stmt);
    SqlTemplate {
        policy: config.policy,
        text: w.out,
        slots: w.slots,
    }
}

/// Replace placeholders with slot values in order. Each placeholder is
/// searched for after the previous replacement, at a word boundary.
pub fn unmask(text: &str, slots: &[Slot]) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    let mut rest = text;
    for slot in slots {
        match find_placeholder(rest, &slot.placeholder) {
            Some(at) => {
                out.push_str(&rest[..at]);
                out.push_str(&slot.value);
                rest = &rest[at + slot.placeholder.len()..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

fn find_placeholder(hay: &str, needle: &str) -> Option<usize> {
    let word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut from = 0;
    while let Some(rel) = hay[from..].find(needle) {
        let at = from + rel;
        let before = hay[..at].chars().next_back();
        let after = hay[at + needle.len()..].chars().next();
        let edge_ok = |c: Option<char>, inner: Option<char>| match (c, inner) {
            (Some(c), Some(i)) if word(i) => !word(c),
            _ => true,
        };
        if edge_ok(before, needle.chars().next()) && edge_ok(after, needle.chars().next_back()) {
            return Some(at);
        }
        from = at + needle.len().max(1);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjunctClass {
    Plain,
    /// Bounds a single temporal column.
    Global,
    /// Relates two or more temporal columns through a function.
    Within,
    AgeGroup,
}

pub fn classify_conjunct(e: &Expr, temporal: &[String], age: &[String]) -> ConjunctClass {
    let Some(cols) = collect_columns(e) else {
        return ConjunctClass::Plain;
    };
    if cols.is_empty() {
        return ConjunctClass::Plain;
    }
    if cols.iter().all(|c| age.contains(&c.name)) {
        return ConjunctClass::AgeGroup;
    }
    if !cols.iter().all(|c| temporal.contains(&c.name)) {
        return ConjunctClass::Plain;
    }
    let mut distinct: Vec<_> = cols.iter().map(|c| c.to_string()).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() == 1 {
        return ConjunctClass::Global;
    }
    if has_function(e) {
        ConjunctClass::Within
    } else {
        ConjunctClass::Plain
    }
}

fn has_function(e: &Expr) -> bool {
    match e {
        Expr::Function { .. } => true,
        Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Nested(expr) => {
            has_function(expr)
        }
        Expr::Binary { left, right, .. } => has_function(left) || has_function(right),
        Expr::Between {
            expr, low, high, ..
        } => has_function(expr) || has_function(low) || has_function(high),
        Expr::InList { expr, list, .. } => has_function(expr) || list.iter().any(has_function),
        _ => false,
    }
}
