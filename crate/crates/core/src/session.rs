//! Executing multi-turn interactions with token resolution and result
//! memoization.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{inline_all, TurnSql, Origin};
use crate::sql::{
    parse_sql, render_select, render_sql, rewrite_tokens, Literal, Replacement, Select, SiteKind,
    Statement, TokenKind, TokenRef,
};
use crate::synth::TABLES;

/// Numeric tolerance used when comparing result values.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("database file not found: {0}")]
    Missing(PathBuf),
    #[error("schema mismatch: missing table {0}")]
    SchemaMismatch(String),
    #[error("database error: {0}")]
    Db(#[from] rusqlite::Error),
}

/// A read-only database connection that counts executed statements.
pub struct Database {
    conn: Connection,
    statements: Cell<u64>,
}

impl Database {
    /// Open an existing file and check that every schema table exists.
    pub fn open(path: &Path) -> Result<Self, SessionError> {
        let db = Self::open_unchecked(path)?;
        db.check_schema(&TABLES)?;
        Ok(db)
    }

    /// Open an existing file read-only without schema checks.
    pub fn open_unchecked(path: &Path) -> Result<Self, SessionError> {
        if !path.is_file() {
            return Err(SessionError::Missing(path.to_path_buf()));
        }
        let conn = Connection::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )?;
        Ok(Self::from_connection(conn))
    }

    pub fn from_connection(conn: Connection) -> Self {
        Database {
            conn,
            statements: Cell::new(0),
        }
    }

    pub fn check_schema(&self, tables: &[&str]) -> Result<(), SessionError> {
        for t in tables {
            let n: i64 = self.conn.query_row(
                "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table' AND name = ?1",
                [t],
                |r| r.get(0),
            )?;
            if n == 0 {
                return Err(SessionError::SchemaMismatch(t.to_string()));
            }
        }
        Ok(())
    }

    /// Number of statements executed through [`Database::query`].
    pub fn statement_count(&self) -> u64 {
        self.statements.get()
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    /// Run one statement, returning its rows and the time spent in the
    /// database (prepare plus stepping).
    pub fn query(&self, sql: &str) -> Result<(ResultSet, Duration), rusqlite::Error> {
        self.statements.set(self.statements.get() + 1);
        let start = Instant::now();
        let mut st = self.conn.prepare(sql)?;
        let columns: Vec<String> = st.column_names().iter().map(|c| c.to_string()).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut cursor = st.query([])?;
        while let Some(row) = cursor.next()? {
            let mut out = Vec::with_capacity(width);
            for i in 0..width {
                out.push(Value::from(row.get_ref(i)?));
            }
            rows.push(out);
        }
        let elapsed = start.elapsed();
        Ok((ResultSet { columns, rows }, elapsed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl From<ValueRef<'_>> for Value {
    fn from(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Value::Null,
            ValueRef::Integer(i) => Value::Integer(i),
            ValueRef::Real(f) => Value::Real(f),
            ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Value::Text(String::from_utf8_lossy(b).into_owned()),
        }
    }
}

impl Value {
    pub fn to_literal(&self) -> Literal {
        match self {
            Value::Null => Literal::Null,
            Value::Integer(i) => Literal::Integer(*i),
            Value::Real(f) => Literal::Real(*f),
            Value::Text(s) => Literal::Text(s.clone()),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Real(f) => Some(*f),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) | Value::Real(_) => 1,
            Value::Text(_) => 2,
        }
    }

    /// Equality with numeric tolerance; integers and reals compare by value.
    pub fn approx_eq(&self, other: &Value) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => {
                let scale = a.abs().max(b.abs()).max(1.0);
                (a - b).abs() <= FLOAT_TOLERANCE * scale
            }
            _ => self == other,
        }
    }

    fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => match (self.as_f64(), other.as_f64()) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                _ => self.rank().cmp(&other.rank()),
            },
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(v) => f.write_str(&crate::sql::format_real(*v)),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultSet {
    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.columns.len()
    }

    /// Plain-text table for terminal output.
    pub fn to_table(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Value::to_string).collect())
            .collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for r in &cells {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |vals: &[String]| {
            vals.iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        out.push_str(
            &widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("-+-"),
        );
        for r in &cells {
            out.push('\n');
            out.push_str(&line(r));
        }
        out.push_str(&format!("\n({} row{})", cells.len(), if cells.len() == 1 { "" } else { "s" }));
        out
    }
}

/// Compare two results column-order-sensitively; rows as a multiset unless
/// `ordered`.
pub fn results_match(a: &ResultSet, b: &ResultSet, ordered: bool) -> bool {
    if a.columns.len() != b.columns.len() || a.rows.len() != b.rows.len() {
        return false;
    }
    let row_eq = |x: &Vec<Value>, y: &Vec<Value>| x.iter().zip(y).all(|(p, q)| p.approx_eq(q));
    if ordered {
        return a.rows.iter().zip(&b.rows).all(|(x, y)| row_eq(x, y));
    }
    let sorted = |r: &ResultSet| {
        let mut rows = r.rows.clone();
        rows.sort_by(|x, y| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        rows
    };
    sorted(a).iter().zip(&sorted(b)).all(|(x, y)| row_eq(x, y))
}

/// Whether row order is significant for a query's result.
pub fn is_ordered(select: &Select) -> bool {
    !select.order_by.is_empty()
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnError {
    #[error("parse error: {message}")]
    Parse { message: String },
    #[error("turn {target} does not exist before this turn")]
    Dangling { target: usize },
    #[error("referenced turn {target} failed")]
    Propagated { target: usize },
    #[error("turn {target} returned {cells} cells where one value is required")]
    Cardinality { target: usize, cells: usize },
    #[error("turn {target} returned {columns} columns where one is required")]
    Width { target: usize, columns: usize },
    #[error("PREV_RESULT{target} cannot stand for a table")]
    Misplaced { target: usize },
    #[error("database error: {message}")]
    Database { message: String },
}

impl TurnError {
    pub fn is_propagated(&self) -> bool {
        matches!(self, TurnError::Propagated { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub index: usize,
    pub sql_text: String,
    /// Parsed form of `sql_text`, if it parsed.
    pub statement: Option<Statement>,
    /// Token-free SQL actually sent to the database.
    pub resolved_sql: Option<String>,
    pub result: Result<ResultSet, TurnError>,
    /// Time spent inside the database only.
    pub wall_time: Duration,
}

impl TurnOutcome {
    pub fn is_ok(&self) -> bool {
        self.result.is_ok()
    }
}

/// Per-interaction execution state.
pub struct Session {
    db: Database,
    history: Vec<TurnOutcome>,
    cache: BTreeMap<usize, ResultSet>,
    resolved: BTreeMap<usize, Select>,
}

impl Session {
    pub fn new(db: Database) -> Self {
        Session {
            db,
            history: Vec::new(),
            cache: BTreeMap::new(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn open(path: &Path) -> Result<Self, SessionError> {
        Ok(Self::new(Database::open(path)?))
    }

    pub fn db(&self) -> &Database {
        &self.db
    }

    pub fn history(&self) -> &[TurnOutcome] {
        &self.history
    }

    pub fn cache(&self) -> &BTreeMap<usize, ResultSet> {
        &self.cache
    }

    pub fn into_database(self) -> Database {
        self.db
    }

    fn check_target(&self, tok: TokenRef) -> Result<(), TurnError> {
        let target = tok.turn;
        if target == 0 || target > self.history.len() {
            return Err(TurnError::Dangling { target });
        }
        if self.history[target - 1].result.is_err() {
            return Err(TurnError::Propagated { target });
        }
        Ok(())
    }

    /// Replace QUERY tokens by the referenced turn's resolved query and
    /// RESULT tokens by the cached values, without touching the database.
    pub fn resolve_tokens(&self, stmt: &Statement) -> Result<Select, TurnError> {
        rewrite_tokens(
            stmt,
            &mut |tok, site| {
                self.check_target(tok)?;
                match tok.kind {
                    TokenKind::Query => Ok(Replacement::Query(self.resolved[&tok.turn].clone())),
                    TokenKind::Result => {
                        let rs = &self.cache[&tok.turn];
                        match site {
                            SiteKind::Scalar if rs.cell_count() > 1 => Err(TurnError::Cardinality {
                                target: tok.turn,
                                cells: rs.cell_count(),
                            }),
                            SiteKind::In | SiteKind::Scalar if rs.columns.len() != 1 => {
                                Err(TurnError::Width {
                                    target: tok.turn,
                                    columns: rs.columns.len(),
                                })
                            }
                            SiteKind::In | SiteKind::Scalar => Ok(Replacement::Values(
                                rs.rows.iter().map(|r| r[0].to_literal()).collect(),
                            )),
                            SiteKind::Derived | SiteKind::RefineBase => {
                                Err(TurnError::Misplaced { target: tok.turn })
                            }
                        }
                    }
                }
            },
            &|tok, _| TurnError::Misplaced { target: tok.turn },
        )
    }

    /// Parse, resolve and execute one turn, appending its outcome.
    pub fn execute_turn(&mut self, sql_text: &str) -> &TurnOutcome {
        let index = self.history.len() + 1;
        let parsed = parse_sql(sql_text).map_err(|e| TurnError::Parse {
            message: e.to_string(),
        });
        let (statement, outcome) = match parsed {
            Err(e) => (None, Err(e)),
            Ok(stmt) => {
                let r = self.resolve_tokens(&stmt);
                (Some(stmt), r)
            }
        };
        let mut resolved_sql = None;
        let mut wall_time = Duration::ZERO;
        let result = outcome.and_then(|select| {
            let text = render_select(&select);
            resolved_sql = Some(text.clone());
            let r = self.db.query(&text);
            match r {
                Ok((rs, t)) => {
                    wall_time = t;
                    self.resolved.insert(index, select);
                    Ok(rs)
                }
                Err(e) => Err(TurnError::Database {
                    message: e.to_string(),
                }),
            }
        });
        if let Ok(rs) = &result {
            self.cache.insert(index, rs.clone());
        }
        self.history.push(TurnOutcome {
            index,
            sql_text: sql_text.to_string(),
            statement,
            resolved_sql,
            result,
            wall_time,
        });
        self.history.last().expect("just pushed")
    }

    /// Static standard-SQL equivalent of turn `index`, inlining the query
    /// text of every referenced turn.
    pub fn inline(&self, index: usize) -> Result<String, String> {
        let turns: Vec<TurnSql> = self
            .history
            .iter()
            .take(index)
            .map(|o| {
                o.statement
                    .clone()
                    .map(|s| TurnSql::new(o.index, s, Origin::Stage1))
                    .ok_or_else(|| format!("turn {} did not parse", o.index))
            })
            .collect::<Result<_, _>>()?;
        inline_all(&turns, index)
            .map(|s| render_select(&s))
            .map_err(|e| e.to_string())
    }
}

/// Execute `turns` in order on a fresh session over `path`.
pub fn replay_interaction<S: AsRef<str>>(
    path: &Path,
    turns: &[S],
) -> Result<Vec<TurnOutcome>, SessionError> {
    let mut session = Session::open(path)?;
    for t in turns {
        session.execute_turn(t.as_ref());
    }
    Ok(session.history)
}

/// Execute a token-free statement directly.
pub fn execute_standard(db: &Database, stmt: &Statement) -> Result<(ResultSet, Duration), TurnError> {
    db.query(&render_sql(stmt)).map_err(|e| TurnError::Database {
        message: e.to_string(),
    })
}
