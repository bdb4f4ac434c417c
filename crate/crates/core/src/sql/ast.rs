//! Syntax tree for the supported SELECT dialect.
//!
//! A turn is a [`Statement`]: either an ordinary `SELECT` or a refinement
//! (`PREV_QUERY3 AND ...`) that extends an earlier turn's query with extra
//! clauses. Subqueries are always plain [`Select`]s.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Query,
    Result,
}

/// A `PREV_QUERY{i}` / `PREV_RESULT{i}` occurrence. `turn` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenRef {
    pub kind: TokenKind,
    pub turn: usize,
}

impl TokenRef {
    pub fn query(turn: usize) -> Self {
        TokenRef { kind: TokenKind::Query, turn }
    }

    pub fn result(turn: usize) -> Self {
        TokenRef { kind: TokenKind::Result, turn }
    }
}

impl fmt::Display for TokenRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TokenKind::Query => write!(f, "PREV_QUERY{}", self.turn),
            TokenKind::Result => write!(f, "PREV_RESULT{}", self.turn),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Select(Box<Select>),
    Refine(Refinement),
}

impl Statement {
    pub fn as_select(&self) -> Option<&Select> {
        match self {
            Statement::Select(s) => Some(s),
            Statement::Refine(_) => None,
        }
    }

    pub fn into_select(self) -> Option<Select> {
        match self {
            Statement::Select(s) => Some(*s),
            Statement::Refine(_) => None,
        }
    }
}

impl From<Select> for Statement {
    fn from(select: Select) -> Self {
        Statement::Select(Box::new(select))
    }
}

/// `PREV_QUERY{base}` followed by clauses appended to that turn's query.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub base: usize,
    pub clauses: Vec<Extension>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    /// `WHERE pred`, used when the base query has no WHERE clause.
    Where(Expr),
    /// `AND pred`, conjoined onto the base query's WHERE clause.
    And(Expr),
    GroupBy(Vec<Expr>),
    Having(Expr),
    OrderBy(Vec<OrderItem>),
    Limit(Limit),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Option<FromClause>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Limit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limit {
    pub count: u64,
    pub offset: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FromClause {
    pub first: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub factor: TableFactor,
    pub on: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table { name: String, alias: Option<String> },
    Derived { source: Source, alias: String },
}

/// Something that stands for a row source: an inline query or a token.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Query(Box<Select>),
    Token(TokenRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortDir {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    pub dir: Option<SortDir>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Integer(i64),
    Real(f64),
    Text(String),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{}.{}", q, self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "=",
            BinOp::NotEq => "<>",
            BinOp::Lt => "<",
            BinOp::LtEq => "<=",
            BinOp::Gt => ">",
            BinOp::GtEq => ">=",
            BinOp::And => "AND",
            BinOp::Or => "OR",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::NotEq | BinOp::Lt | BinOp::LtEq | BinOp::Gt | BinOp::GtEq
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FuncArgs {
    Star,
    List(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    Binary {
        left: Box<Expr>,
        op: BinOp,
        right: Box<Expr>,
    },
    Function {
        name: String,
        distinct: bool,
        args: FuncArgs,
    },
    /// `DENSE_RANK() OVER ( ORDER BY ... )`
    Window {
        name: String,
        order_by: Vec<OrderItem>,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    InSource {
        expr: Box<Expr>,
        source: Source,
        negated: bool,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
        negated: bool,
    },
    /// Scalar subquery, rendered `( SELECT ... )`.
    Subquery(Box<Select>),
    /// Scalar token, rendered `( PREV_RESULT3 )`.
    Token(TokenRef),
    /// Explicit grouping parentheses.
    Nested(Box<Expr>),
}

impl Expr {
    pub fn column(qualifier: &str, name: &str) -> Expr {
        Expr::Column(ColumnRef {
            qualifier: Some(qualifier.to_string()),
            name: name.to_string(),
        })
    }

    pub fn binary(left: Expr, op: BinOp, right: Expr) -> Expr {
        Expr::Binary {
            left: Box::new(left),
            op,
            right: Box::new(right),
        }
    }

    /// Conjoin two predicates into a left-deep chain, parenthesizing `OR`
    /// operands so the result keeps its meaning when rendered.
    pub fn and(left: Expr, right: Expr) -> Expr {
        fn guard(e: Expr) -> Expr {
            match e {
                Expr::Binary { op: BinOp::Or, .. } => Expr::Nested(Box::new(e)),
                other => other,
            }
        }
        fn flatten(e: Expr, out: &mut Vec<Expr>) {
            match e {
                Expr::Binary {
                    left,
                    op: BinOp::And,
                    right,
                } => {
                    flatten(*left, out);
                    flatten(*right, out);
                }
                other => out.push(guard(other)),
            }
        }
        let mut parts = Vec::new();
        flatten(left, &mut parts);
        flatten(right, &mut parts);
        let mut iter = parts.into_iter();
        let first = iter.next().expect("at least two conjuncts");
        iter.fold(first, |acc, e| Expr::binary(acc, BinOp::And, e))
    }

    /// Split a predicate into its top-level `AND` operands.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Binary {
                    left,
                    op: BinOp::And,
                    right,
                } => {
                    walk(left, out);
                    walk(right, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Rebuild a left-deep `AND` chain from conjuncts.
    pub fn conjoin<I: IntoIterator<Item = Expr>>(parts: I) -> Option<Expr> {
        parts.into_iter().reduce(Expr::and)
    }

    pub fn is_aggregate_call(&self) -> bool {
        matches!(self, Expr::Function { name, .. } if is_aggregate(name))
    }
}

pub fn is_aggregate(name: &str) -> bool {
    matches!(name, "COUNT" | "SUM" | "AVG" | "MIN" | "MAX")
}

impl Select {
    /// Aliases introduced by derived tables in this query's FROM clause.
    pub fn derived_aliases(&self) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(from) = &self.from {
            for factor in std::iter::once(&from.first).chain(from.joins.iter().map(|j| &j.factor)) {
                if let TableFactor::Derived { alias, .. } = factor {
                    out.push(alias.as_str());
                }
            }
        }
        out
    }

    /// Names (alias or table name) usable as column qualifiers in this query.
    pub fn visible_qualifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(from) = &self.from {
            for factor in std::iter::once(&from.first).chain(from.joins.iter().map(|j| &j.factor)) {
                match factor {
                    TableFactor::Table { name, alias } => {
                        out.push(alias.as_deref().unwrap_or(name.as_str()))
                    }
                    TableFactor::Derived { alias, .. } => out.push(alias.as_str()),
                }
            }
        }
        out
    }

    /// Output column names as SQLite would report them for a derived table.
    pub fn output_names(&self) -> Vec<String> {
        self.items
            .iter()
            .map(|item| match item {
                SelectItem::Wildcard => "*".to_string(),
                SelectItem::Expr { alias: Some(a), .. } => a.clone(),
                SelectItem::Expr {
                    expr: Expr::Column(c),
                    ..
                } => c.name.clone(),
                SelectItem::Expr { expr, .. } => super::render::render_expr(expr),
            })
            .collect()
    }

    /// Append refinement clauses onto this query.
    pub fn apply(mut self, clauses: &[Extension]) -> Select {
        for clause in clauses {
            match clause {
                Extension::Where(p) | Extension::And(p) => {
                    self.selection = Some(match self.selection.take() {
                        Some(existing) => Expr::and(existing, p.clone()),
                        None => p.clone(),
                    });
                }
                Extension::GroupBy(g) => self.group_by = g.clone(),
                Extension::Having(p) => {
                    self.having = Some(match self.having.take() {
                        Some(existing) => Expr::and(existing, p.clone()),
                        None => p.clone(),
                    });
                }
                Extension::OrderBy(o) => self.order_by = o.clone(),
                Extension::Limit(l) => self.limit = Some(*l),
            }
        }
        self
    }
}
