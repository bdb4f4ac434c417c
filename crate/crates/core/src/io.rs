//! Interaction records and line-delimited JSON files.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{validate_turns, DecomposeError, Origin, TurnSql};
use crate::nlq::TurnCategory;
use crate::sql::{parse_select, parse_sql, Select};

pub const INTERACTION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("unsupported format_version {found} on line {line}")]
    Version { line: usize, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One multi-turn interaction sharing a single goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub format_version: u32,
    pub interaction_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_nlq: Option<String>,
    pub turns: Vec<InteractionTurn>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTurn {
    pub index: usize,
    pub nlq: String,
    pub sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
    pub categories: TurnCategory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Source query the interaction decomposes; absent for concatenations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub split_tags: Vec<String>,
    /// Member interaction ids of a concatenated interaction, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<String>,
}

impl InteractionRecord {
    /// Parsed turns; indices must run from 1 and tokens point backwards.
    pub fn to_turns(&self) -> Result<Vec<TurnSql>, DecomposeError> {
        let turns = self
            .turns
            .iter()
            .map(|t| {
                Ok(TurnSql::new(
                    t.index,
                    parse_sql(&t.sql)?,
                    t.origin.unwrap_or(Origin::Stage1),
                ))
            })
            .collect::<Result<Vec<_>, DecomposeError>>()?;
        validate_turns(&turns)?;
        Ok(turns)
    }

    pub fn source_select(&self) -> Option<Result<Select, DecomposeError>> {
        self.provenance
            .source
            .as_deref()
            .map(|s| parse_select(s).map_err(DecomposeError::from))
    }

    pub fn sql_texts(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.sql.as_str()).collect()
    }

    pub fn questions(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.nlq.as_str()).collect()
    }
}

/// Records carrying a format version checked on read.
pub trait Versioned {
    const FORMAT_VERSION: u32;
    fn format_version(&self) -> u32;
}

impl Versioned for InteractionRecord {
    const FORMAT_VERSION: u32 = INTERACTION_FORMAT_VERSION;
    fn format_version(&self) -> u32 {
        self.format_version
    }
}

impl Versioned for crate::decompose::PlanRecord {
    const FORMAT_VERSION: u32 = crate::decompose::PLAN_FORMAT_VERSION;
    fn format_version(&self) -> u32 {
        self.format_version
    }
}

/// Parse one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IoError::Json {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// [`read_jsonl`] rejecting records of another format version.
pub fn read_versioned<T: DeserializeOwned + Versioned, R: BufRead>(
    reader: R,
) -> Result<Vec<T>, IoError> {
    let records: Vec<T> = read_jsonl(reader)?;
    for (i, r) in records.iter().enumerate() {
        if r.format_version() != T::FORMAT_VERSION {
            return Err(IoError::Version {
                line: i + 1,
                found: r.format_version(),
            });
        }
    }
    Ok(records)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<(), IoError> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(|e| IoError::Json {
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_interactions(path: &std::path::Path) -> Result<Vec<InteractionRecord>, IoError> {
    read_versioned(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_interactions(
    path: &std::path::Path,
    records: &[InteractionRecord],
) -> Result<(), IoError> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), records)
}
