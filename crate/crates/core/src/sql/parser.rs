use super::ast::*;
use super::lexer::{tokenize, Spanned, Tok};
use super::SqlError;

const RESERVED: &[&str] = &[
    "SELECT", "DISTINCT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "ASC", "DESC",
    "LIMIT", "OFFSET", "AND", "OR", "NOT", "IN", "IS", "NULL", "JOIN", "INNER", "ON", "AS",
    "BETWEEN", "OVER", "ALL",
];

const UNSUPPORTED: &[&str] = &[
    "UNION", "INTERSECT", "EXCEPT", "WITH", "CASE", "EXISTS", "LIKE", "GLOB", "REGEXP", "INSERT",
    "UPDATE", "DELETE", "CREATE", "DROP", "ALTER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL",
    "OUTER", "USING", "WINDOW", "COLLATE", "CAST", "VALUES", "PARTITION",
];

const SCALAR_FUNCTIONS: &[&str] = &[
    "DATETIME", "DATE", "TIME", "STRFTIME", "JULIANDAY", "ROUND", "ABS", "LENGTH", "LOWER",
    "UPPER",
];

/// Parse one statement of the supported dialect.
pub fn parse_sql(text: &str) -> Result<Statement, SqlError> {
    if text.trim().is_empty() {
        return Err(SqlError::syntax("empty statement", 0));
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        i: 0,
        end: text.len(),
    };
    let stmt = p.statement()?;
    p.eat(&Tok::Semicolon);
    if let Some(t) = p.peek_spanned() {
        let pos = t.pos;
        if let Tok::Word { upper, .. } = &t.tok {
            if UNSUPPORTED.contains(&upper.as_str()) {
                return Err(SqlError::unsupported(upper.clone(), pos));
            }
        }
        return Err(SqlError::syntax("unexpected trailing input", pos));
    }
    Ok(stmt)
}

/// Parse text that must be a plain SELECT (no refinement form).
pub fn parse_select(text: &str) -> Result<Select, SqlError> {
    match parse_sql(text)? {
        Statement::Select(s) => Ok(*s),
        Statement::Refine(_) => Err(SqlError::syntax("expected SELECT statement", 0)),
    }
}

pub(crate) fn token_from_word(word: &str) -> Option<TokenRef> {
    let upper = word.to_ascii_uppercase();
    let (kind, digits) = if let Some(d) = upper.strip_prefix("PREV_QUERY") {
        (TokenKind::Query, d)
    } else {
        let d = upper.strip_prefix("PREV_RESULT")?;
        (TokenKind::Result, d)
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let turn: usize = digits.parse().ok()?;
    (turn >= 1).then_some(TokenRef { kind, turn })
}

struct Parser {
    toks: Vec<Spanned>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|s| &s.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.i + n).map(|s| &s.tok)
    }

    fn peek_spanned(&self) -> Option<&Spanned> {
        self.toks.get(self.i)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|s| s.pos).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|s| s.tok.clone());
        self.i += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), SqlError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn error(&self, msg: impl Into<String>) -> SqlError {
        if let Some(Tok::Word { upper, .. }) = self.peek() {
            if UNSUPPORTED.contains(&upper.as_str()) {
                return SqlError::unsupported(upper.clone(), self.pos());
            }
        }
        SqlError::syntax(msg, self.pos())
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word { upper, .. }) if upper == kw)
    }

    fn peek_keyword_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Some(Tok::Word { upper, .. }) if upper == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected {kw}")))
        }
    }

    /// A token at the current position, bare or bracketed.
    fn peek_token_ref(&self) -> Option<TokenRef> {
        match self.peek()? {
            Tok::Word { raw, .. } => token_from_word(raw),
            Tok::Bracketed(inner) => token_from_word(inner),
            _ => None,
        }
    }

    fn identifier(&mut self) -> Result<String, SqlError> {
        match self.peek() {
            Some(Tok::Word { raw, upper }) => {
                if RESERVED.contains(&upper.as_str()) || UNSUPPORTED.contains(&upper.as_str()) {
                    return Err(self.error(format!("expected identifier, found {upper}")));
                }
                if token_from_word(raw).is_some() {
                    return Err(self.error("special token not allowed here"));
                }
                let id = raw.to_ascii_lowercase();
                self.i += 1;
                Ok(id)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn is_alias_word(&self) -> bool {
        match self.peek() {
            Some(Tok::Word { raw, upper }) => {
                !RESERVED.contains(&upper.as_str())
                    && !UNSUPPORTED.contains(&upper.as_str())
                    && token_from_word(raw).is_none()
            }
            _ => false,
        }
    }

    fn statement(&mut self) -> Result<Statement, SqlError> {
        if let Some(tok) = self.peek_token_ref() {
            if tok.kind != TokenKind::Query {
                return Err(self.error("a statement may only start with a PREV_QUERY token"));
            }
            self.i += 1;
            let clauses = self.extensions()?;
            return Ok(Statement::Refine(Refinement {
                base: tok.turn,
                clauses,
            }));
        }
        Ok(Statement::Select(Box::new(self.select()?)))
    }

    fn extensions(&mut self) -> Result<Vec<Extension>, SqlError> {
        let mut out = Vec::new();
        loop {
            if self.eat_keyword("WHERE") {
                out.push(Extension::Where(self.expr()?));
            } else if self.eat_keyword("AND") {
                out.push(Extension::And(self.expr()?));
            } else if self.peek_keyword("GROUP") {
                self.i += 1;
                self.expect_keyword("BY")?;
                out.push(Extension::GroupBy(self.expr_list()?));
            } else if self.eat_keyword("HAVING") {
                out.push(Extension::Having(self.expr()?));
            } else if self.peek_keyword("ORDER") {
                self.i += 1;
                self.expect_keyword("BY")?;
                out.push(Extension::OrderBy(self.order_items()?));
            } else if self.peek_keyword("LIMIT") {
                out.push(Extension::Limit(self.limit()?));
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        self.expect_keyword("SELECT")?;
        let mut select = Select {
            distinct: self.eat_keyword("DISTINCT"),
            ..Select::default()
        };
        if !select.distinct {
            self.eat_keyword("ALL");
        }
        select.items = self.select_items()?;
        if self.eat_keyword("FROM") {
            select.from = Some(self.from()?);
        }
        if self.eat_keyword("WHERE") {
            select.selection = Some(self.expr()?);
        }
        if self.peek_keyword("GROUP") {
            self.i += 1;
            self.expect_keyword("BY")?;
            select.group_by = self.expr_list()?;
        }
        if self.eat_keyword("HAVING") {
            select.having = Some(self.expr()?);
        }
        if self.peek_keyword("ORDER") {
            self.i += 1;
            self.expect_keyword("BY")?;
            select.order_by = self.order_items()?;
        }
        if self.peek_keyword("LIMIT") {
            select.limit = Some(self.limit()?);
        }
        Ok(select)
    }

    fn limit(&mut self) -> Result<Limit, SqlError> {
        self.expect_keyword("LIMIT")?;
        let count = self.unsigned()?;
        let offset = if self.eat_keyword("OFFSET") {
            Some(self.unsigned()?)
        } else {
            None
        };
        Ok(Limit { count, offset })
    }

    fn unsigned(&mut self) -> Result<u64, SqlError> {
        match self.peek() {
            Some(Tok::Integer(v)) if *v >= 0 => {
                let v = *v as u64;
                self.i += 1;
                Ok(v)
            }
            _ => Err(self.error("expected non-negative integer")),
        }
    }

    fn select_items(&mut self) -> Result<Vec<SelectItem>, SqlError> {
        let mut items = Vec::new();
        loop {
            if self.eat(&Tok::Star) {
                items.push(SelectItem::Wildcard);
            } else {
                let expr = self.expr()?;
                let alias = if self.eat_keyword("AS") || self.is_alias_word() {
                    Some(self.identifier()?)
                } else {
                    None
                };
                items.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(items)
    }

    fn from(&mut self) -> Result<FromClause, SqlError> {
        let first = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            if self.peek() == Some(&Tok::Comma) {
                return Err(SqlError::unsupported("comma join", self.pos()));
            }
            let inner = self.peek_keyword("INNER") && self.peek_keyword_at(1, "JOIN");
            if inner {
                self.i += 1;
            }
            if !self.eat_keyword("JOIN") {
                break;
            }
            let factor = self.table_factor()?;
            self.expect_keyword("ON")?;
            let on = self.expr()?;
            joins.push(Join { factor, on });
        }
        Ok(FromClause { first, joins })
    }

    fn table_factor(&mut self) -> Result<TableFactor, SqlError> {
        if self.eat(&Tok::LParen) {
            let source = if let Some(tok) = self.peek_token_ref() {
                self.i += 1;
                Source::Token(tok)
            } else if self.peek_keyword("SELECT") {
                Source::Query(Box::new(self.select()?))
            } else {
                return Err(self.error("expected subquery or token in FROM"));
            };
            self.expect(&Tok::RParen, "')'")?;
            self.eat_keyword("AS");
            let alias = self
                .identifier()
                .map_err(|_| self.error("derived table requires an alias"))?;
            return Ok(TableFactor::Derived { source, alias });
        }
        let name = self.identifier()?;
        let alias = if self.eat_keyword("AS") || self.is_alias_word() {
            Some(self.identifier()?)
        } else {
            None
        };
        Ok(TableFactor::Table { name, alias })
    }

    fn expr_list(&mut self) -> Result<Vec<Expr>, SqlError> {
        let mut out = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn order_items(&mut self) -> Result<Vec<OrderItem>, SqlError> {
        let mut out = Vec::new();
        loop {
            let expr = self.expr()?;
            let dir = if self.eat_keyword("ASC") {
                Some(SortDir::Asc)
            } else if self.eat_keyword("DESC") {
                Some(SortDir::Desc)
            } else {
                None
            };
            out.push(OrderItem { expr, dir });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.and_expr()?;
        while self.eat_keyword("OR") {
            let right = self.and_expr()?;
            left = Expr::binary(left, BinOp::Or, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.not_expr()?;
        while self.eat_keyword("AND") {
            let right = self.not_expr()?;
            left = Expr::binary(left, BinOp::And, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_keyword("NOT") {
            let inner = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(inner),
            });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.additive()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Eq) => Some(BinOp::Eq),
                Some(Tok::NotEq) => Some(BinOp::NotEq),
                Some(Tok::Lt) => Some(BinOp::Lt),
                Some(Tok::LtEq) => Some(BinOp::LtEq),
                Some(Tok::Gt) => Some(BinOp::Gt),
                Some(Tok::GtEq) => Some(BinOp::GtEq),
                _ => None,
            };
            if let Some(op) = op {
                self.i += 1;
                let right = self.additive()?;
                left = Expr::binary(left, op, right);
                continue;
            }
            if self.eat_keyword("IS") {
                let negated = self.eat_keyword("NOT");
                self.expect_keyword("NULL")?;
                left = Expr::IsNull {
                    expr: Box::new(left),
                    negated,
                };
                continue;
            }
            let negated = self.peek_keyword("NOT")
                && (self.peek_keyword_at(1, "IN") || self.peek_keyword_at(1, "BETWEEN"));
            if negated {
                self.i += 1;
            }
            if self.eat_keyword("IN") {
                left = self.in_rhs(left, negated)?;
                continue;
            }
            if self.eat_keyword("BETWEEN") {
                let low = self.additive()?;
                self.expect_keyword("AND")?;
                let high = self.additive()?;
                left = Expr::Between {
                    expr: Box::new(left),
                    low: Box::new(low),
                    high: Box::new(high),
                    negated,
                };
                continue;
            }
            break;
        }
        Ok(left)
    }

    fn in_rhs(&mut self, left: Expr, negated: bool) -> Result<Expr, SqlError> {
        self.expect(&Tok::LParen, "'(' after IN")?;
        let expr = Box::new(left);
        let out = if let Some(tok) = self.peek_token_ref() {
            self.i += 1;
            Expr::InSource {
                expr,
                source: Source::Token(tok),
                negated,
            }
        } else if self.peek_keyword("SELECT") {
            Expr::InSource {
                expr,
                source: Source::Query(Box::new(self.select()?)),
                negated,
            }
        } else {
            Expr::InList {
                expr,
                list: self.expr_list()?,
                negated,
            }
        };
        self.expect(&Tok::RParen, "')'")?;
        Ok(out)
    }

    fn additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.i += 1;
            let right = self.multiplicative()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.i += 1;
            let right = self.unary()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Expr::Literal(Literal::Integer(v)) => Expr::Literal(Literal::Integer(-v)),
                Expr::Literal(Literal::Real(v)) => Expr::Literal(Literal::Real(-v)),
                other => Expr::Unary {
                    op: UnaryOp::Neg,
                    expr: Box::new(other),
                },
            });
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        if let Some(tok) = self.peek_token_ref() {
            self.i += 1;
            return Ok(Expr::Token(tok));
        }
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Integer(v)) => Ok(Expr::Literal(Literal::Integer(v))),
            Some(Tok::Real(v)) => Ok(Expr::Literal(Literal::Real(v))),
            Some(Tok::Str(s)) => Ok(Expr::Literal(Literal::Text(s))),
            Some(Tok::LParen) => {
                let out = if let Some(tok) = self.peek_token_ref() {
                    self.i += 1;
                    Expr::Token(tok)
                } else if self.peek_keyword("SELECT") {
                    Expr::Subquery(Box::new(self.select()?))
                } else {
                    Expr::Nested(Box::new(self.expr()?))
                };
                self.expect(&Tok::RParen, "')'")?;
                Ok(out)
            }
            Some(Tok::Word { raw, upper }) => {
                if upper == "NULL" {
                    return Ok(Expr::Literal(Literal::Null));
                }
                if UNSUPPORTED.contains(&upper.as_str()) {
                    return Err(SqlError::unsupported(upper, pos));
                }
                if self.peek() == Some(&Tok::LParen) {
                    return self.function(upper, pos);
                }
                if RESERVED.contains(&upper.as_str()) {
                    return Err(SqlError::syntax(format!("unexpected keyword {upper}"), pos));
                }
                let first = raw.to_ascii_lowercase();
                if self.eat(&Tok::Dot) {
                    if self.peek() == Some(&Tok::Star) {
                        return Err(SqlError::unsupported("qualified wildcard", self.pos()));
                    }
                    let name = self.identifier()?;
                    Ok(Expr::Column(ColumnRef {
                        qualifier: Some(first),
                        name,
                    }))
                } else {
                    Ok(Expr::Column(ColumnRef {
                        qualifier: None,
                        name: first,
                    }))
                }
            }
            Some(Tok::Bracketed(inner)) => Err(SqlError::syntax(
                format!("unresolved placeholder [{inner}]"),
                pos,
            )),
            Some(_) => Err(SqlError::syntax("unexpected token", pos)),
            None => Err(SqlError::syntax("unexpected end of input", pos)),
        }
    }

    fn function(&mut self, name: String, pos: usize) -> Result<Expr, SqlError> {
        self.expect(&Tok::LParen, "'('")?;
        if name == "DENSE_RANK" {
            self.expect(&Tok::RParen, "')'")?;
            self.expect_keyword("OVER")?;
            self.expect(&Tok::LParen, "'(' after OVER")?;
            if self.peek_keyword("PARTITION") {
                return Err(SqlError::unsupported("PARTITION BY", self.pos()));
            }
            self.expect_keyword("ORDER")?;
            self.expect_keyword("BY")?;
            let order_by = self.order_items()?;
            self.expect(&Tok::RParen, "')'")?;
            return Ok(Expr::Window { name, order_by });
        }
        if !is_aggregate(&name) && !SCALAR_FUNCTIONS.contains(&name.as_str()) {
            return Err(SqlError::unsupported(format!("function {name}"), pos));
        }
        if self.eat(&Tok::Star) {
            if name != "COUNT" {
                return Err(SqlError::syntax(format!("{name}(*) is not valid"), pos));
            }
            self.expect(&Tok::RParen, "')'")?;
            return Ok(Expr::Function {
                name,
                distinct: false,
                args: FuncArgs::Star,
            });
        }
        let distinct = self.eat_keyword("DISTINCT");
        if distinct && !is_aggregate(&name) {
            return Err(SqlError::syntax("DISTINCT only allowed in aggregates", pos));
        }
        let args = if self.peek() == Some(&Tok::RParen) {
            Vec::new()
        } else {
            self.expr_list()?
        };
        self.expect(&Tok::RParen, "')'")?;
        if self.peek_keyword("OVER") {
            return Err(SqlError::unsupported(format!("window function {name}"), self.pos()));
        }
        Ok(Expr::Function {
            name,
            distinct,
            args: FuncArgs::List(args),
        })
    }
}
