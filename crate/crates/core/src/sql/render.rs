//! Canonical single-line rendering. The same writer produces masked
//! templates when given a [`MaskPolicy`], so masked text and canonical text
//! can never drift apart.

use super::ast::*;
use super::mask::{classify_conjunct, ConjunctClass, MaskConfig, MaskPolicy, Slot, SlotClause, SlotRole};

pub fn render_sql(stmt: &Statement) -> String {
    let mut w = Writer::plain();
    w.statement(stmt);
    w.out
}

pub fn render_select(select: &Select) -> String {
    let mut w = Writer::plain();
    w.select(select);
    w.out
}

pub fn render_expr(expr: &Expr) -> String {
    let mut w = Writer::plain();
    w.expr(expr);
    w.out
}

pub fn render_literal(lit: &Literal) -> String {
    match lit {
        Literal::Integer(v) => v.to_string(),
        Literal::Real(v) => format_real(*v),
        Literal::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Literal::Null => "NULL".to_string(),
    }
}

/// Shortest text that reparses to the same `f64` and still reads as a real.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        return "NULL".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "9e999".into() } else { "-9e999".into() };
    }
    format!("{v:?}")
}

pub(crate) struct Writer<'a> {
    pub out: String,
    mask: Option<&'a MaskConfig>,
    pub slots: Vec<Slot>,
    values: usize,
    globals: usize,
    exacts: usize,
    clause: SlotClause,
    derived: Vec<Vec<String>>,
}

impl<'a> Writer<'a> {
    pub fn plain() -> Self {
        Writer {
            out: String::new(),
            mask: None,
            slots: Vec::new(),
            values: 0,
            globals: 0,
            exacts: 0,
            clause: SlotClause::Select,
            derived: Vec::new(),
        }
    }

    pub fn masked(config: &'a MaskConfig) -> Self {
        Writer {
            mask: Some(config),
            ..Writer::plain()
        }
    }

    fn policy(&self) -> Option<MaskPolicy> {
        self.mask.map(|m| m.policy)
    }

    /// Masks beyond plain value masking (functions, time filters, ...).
    fn structural(&self) -> bool {
        matches!(
            self.policy(),
            Some(MaskPolicy::Composition) | Some(MaskPolicy::NlqNorm)
        )
    }

    fn abstract_names(&self) -> bool {
        self.policy() == Some(MaskPolicy::NlqNorm)
    }

    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn slot(&mut self, placeholder: String, value: String, role: SlotRole, detail: Option<String>) {
        self.out.push_str(&placeholder);
        self.slots.push(Slot {
            placeholder,
            value,
            role,
            clause: self.clause,
            detail,
        });
    }

    fn plain_text<F: FnOnce(&mut Writer<'_>)>(f: F) -> String {
        let mut w = Writer::plain();
        f(&mut w);
        w.out
    }

    pub fn statement(&mut self, stmt: &Statement) {
        match stmt {
            Statement::Select(s) => self.select(s),
            Statement::Refine(r) => self.refinement(r),
        }
    }

    fn token(&mut self, tok: TokenRef) {
        match self.policy() {
            None => self.push(&tok.to_string()),
            Some(MaskPolicy::NlqNorm) => {
                self.slot("[PREV]".into(), tok.to_string(), SlotRole::Token, None)
            }
            Some(_) => {
                let ph = match tok.kind {
                    TokenKind::Query => "[PREV_QUERY]",
                    TokenKind::Result => "[PREV_RESULT]",
                };
                self.slot(ph.into(), tok.to_string(), SlotRole::Token, None)
            }
        }
    }

    fn refinement(&mut self, r: &Refinement) {
        self.clause = SlotClause::From;
        self.token(TokenRef::query(r.base));
        self.derived.push(Vec::new());
        let mut i = 0;
        while i < r.clauses.len() {
            match &r.clauses[i] {
                Extension::Where(p) => {
                    self.clause = SlotClause::Where;
                    self.push(" WHERE ");
                    self.predicate(p);
                }
                Extension::And(p) => {
                    self.clause = SlotClause::Where;
                    self.push(" AND ");
                    self.predicate(p);
                }
                Extension::GroupBy(g) => {
                    self.clause = SlotClause::GroupBy;
                    self.push(" GROUP BY ");
                    self.expr_list(g);
                }
                Extension::Having(p) => {
                    self.clause = SlotClause::Having;
                    self.push(" HAVING ");
                    self.predicate(p);
                }
                Extension::OrderBy(items) => {
                    self.clause = SlotClause::OrderBy;
                    let limit = match r.clauses.get(i + 1) {
                        Some(Extension::Limit(l)) => Some(*l),
                        _ => None,
                    };
                    self.push(" ");
                    if self.order_tail(items, limit) && limit.is_some() {
                        i += 1;
                    }
                }
                Extension::Limit(l) => {
                    self.push(" ");
                    self.limit(*l);
                }
            }
            i += 1;
        }
        self.derived.pop();
    }

    pub fn select(&mut self, s: &Select) {
        let saved_clause = self.clause;
        self.derived
            .push(s.derived_aliases().into_iter().map(String::from).collect());
        self.clause = SlotClause::Select;
        self.push("SELECT ");
        if s.distinct {
            self.push("DISTINCT ");
        }
        for (i, item) in s.items.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            match item {
                SelectItem::Wildcard => self.push("*"),
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr);
                    if let Some(a) = alias {
                        self.push(" AS ");
                        self.name(a, SlotRole::Column, None);
                    }
                }
            }
        }
        if let Some(from) = &s.from {
            self.clause = SlotClause::From;
            self.push(" FROM ");
            self.table_factor(&from.first);
            for join in &from.joins {
                self.clause = SlotClause::From;
                self.push(" JOIN ");
                self.table_factor(&join.factor);
                self.clause = SlotClause::Join;
                self.push(" ON ");
                self.expr(&join.on);
            }
        }
        if let Some(p) = &s.selection {
            self.clause = SlotClause::Where;
            self.push(" WHERE ");
            self.predicate(p);
        }
        if !s.group_by.is_empty() {
            self.clause = SlotClause::GroupBy;
            self.push(" GROUP BY ");
            self.expr_list(&s.group_by);
        }
        if let Some(p) = &s.having {
            self.clause = SlotClause::Having;
            self.push(" HAVING ");
            self.predicate(p);
        }
        if !s.order_by.is_empty() {
            self.clause = SlotClause::OrderBy;
            self.push(" ");
            self.order_tail(&s.order_by, s.limit);
        } else if let Some(l) = s.limit {
            self.push(" ");
            self.limit(l);
        }
        self.derived.pop();
        self.clause = saved_clause;
    }

    /// Renders `ORDER BY ... [LIMIT ...]`; returns true when the limit was
    /// consumed as part of the clause.
    fn order_tail(&mut self, items: &[OrderItem], limit: Option<Limit>) -> bool {
        if self.structural() {
            if let Some(mask) = self.mask {
                let temporal = items.len() == 1 && mask.is_temporal_expr(&items[0].expr);
                if temporal {
                    let value = Writer::plain_text(|w| {
                        w.order_by(items);
                        if let Some(l) = limit {
                            w.push(" ");
                            w.limit(l);
                        }
                    });
                    self.exacts += 1;
                    let ph = format!("[time_filter_exact{}]", self.exacts);
                    self.slot(ph, value, SlotRole::TimeExact, None);
                    return true;
                }
            }
        }
        self.order_by(items);
        if let Some(l) = limit {
            self.push(" ");
            self.limit(l);
        }
        true
    }

    fn order_by(&mut self, items: &[OrderItem]) {
        self.push("ORDER BY ");
        self.order_items(items);
    }

    fn order_items(&mut self, items: &[OrderItem]) {
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.expr(&item.expr);
            match item.dir {
                Some(SortDir::Asc) => self.push(" ASC"),
                Some(SortDir::Desc) => self.push(" DESC"),
                None => {}
            }
        }
    }

    fn limit(&mut self, l: Limit) {
        self.push(&format!("LIMIT {}", l.count));
        if let Some(off) = l.offset {
            self.push(&format!(" OFFSET {off}"));
        }
    }

    fn table_factor(&mut self, f: &TableFactor) {
        match f {
            TableFactor::Table { name, alias } => {
                self.name(name, SlotRole::Table, Some(name.clone()));
                if let Some(a) = alias {
                    self.push(" AS ");
                    self.name(a, SlotRole::Table, None);
                }
            }
            TableFactor::Derived { source, alias } => {
                self.push("( ");
                match source {
                    Source::Query(q) => self.select(q),
                    Source::Token(t) => self.token(*t),
                }
                self.push(" ) AS ");
                self.name(alias, SlotRole::Table, None);
            }
        }
    }

    fn name(&mut self, name: &str, role: SlotRole, detail: Option<String>) {
        if self.abstract_names() {
            let ph = match role {
                SlotRole::Table => "table",
                _ => "column",
            };
            self.slot(ph.into(), name.to_string(), role, detail);
        } else {
            self.push(name);
        }
    }

    fn expr_list(&mut self, list: &[Expr]) {
        for (i, e) in list.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.expr(e);
        }
    }

    /// A WHERE/HAVING predicate; literal operands are condition values and
    /// structural policies mask time-filter and age-group conjunct runs.
    fn predicate(&mut self, p: &Expr) {
        let Some(mask) = self.mask.filter(|_| self.structural()) else {
            self.condition(p);
            return;
        };
        let parts = p.conjuncts();
        let classes: Vec<ConjunctClass> = parts
            .iter()
            .map(|c| classify_conjunct(c, &mask.temporal_columns, &mask.age_columns))
            .collect();
        let mut i = 0;
        let mut first = true;
        while i < parts.len() {
            if !first {
                self.push(" AND ");
            }
            first = false;
            let class = classes[i];
            if class == ConjunctClass::Plain {
                self.condition(parts[i]);
                i += 1;
                continue;
            }
            let mut j = i + 1;
            while j < parts.len() && classes[j] == class {
                j += 1;
            }
            let value = Writer::plain_text(|w| {
                for (k, c) in parts[i..j].iter().enumerate() {
                    if k > 0 {
                        w.push(" AND ");
                    }
                    w.expr(c);
                }
            });
            let (ph, role) = match class {
                ConjunctClass::Global => {
                    self.globals += 1;
                    (format!("[time_filter_global{}]", self.globals), SlotRole::TimeGlobal)
                }
                ConjunctClass::Within => ("[time_filter_within]".to_string(), SlotRole::TimeWithin),
                ConjunctClass::AgeGroup => ("[age_group]".to_string(), SlotRole::AgeGroup),
                ConjunctClass::Plain => unreachable!(),
            };
            self.slot(ph, value, role, None);
            i = j;
        }
    }

    /// Render an expression in which direct literal operands of comparisons
    /// count as condition values.
    fn condition(&mut self, e: &Expr) {
        match e {
            Expr::Binary { left, op, right } if *op == BinOp::And || *op == BinOp::Or => {
                self.condition(left);
                self.push(&format!(" {} ", op.symbol()));
                self.condition(right);
            }
            Expr::Nested(inner) => {
                self.push("( ");
                self.condition(inner);
                self.push(" )");
            }
            Expr::Unary {
                op: UnaryOp::Not,
                expr,
            } => {
                self.push("NOT ");
                self.condition(expr);
            }
            Expr::Binary { left, op, right } if op.is_comparison() => {
                let kind = self.value_kind(left, *op, right);
                self.operand(left, kind);
                self.push(" ");
                self.comparison_op(left, *op, right);
                self.push(" ");
                self.operand(right, kind);
            }
            Expr::InList {
                expr,
                list,
                negated,
            } => {
                self.expr(expr);
                self.push(if *negated { " NOT IN ( " } else { " IN ( " });
                for (i, item) in list.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.operand(item, ValueKind::Value);
                }
                self.push(" )");
            }
            Expr::Between {
                expr,
                low,
                high,
                negated,
            } => {
                self.expr(expr);
                self.push(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
                self.operand(low, ValueKind::Value);
                self.push(" AND ");
                self.operand(high, ValueKind::Value);
            }
            other => self.expr(other),
        }
    }

    fn value_kind(&self, left: &Expr, op: BinOp, right: &Expr) -> ValueKind {
        if !self.structural() {
            return ValueKind::Value;
        }
        let col = match (left, right) {
            (Expr::Column(c), Expr::Literal(_)) | (Expr::Literal(_), Expr::Column(c)) => Some(c),
            _ => None,
        };
        if let Some(c) = col {
            let derived = self.derived.last().map(|d| d.as_slice()).unwrap_or(&[]);
            let via_derived = c
                .qualifier
                .as_deref()
                .is_some_and(|q| derived.iter().any(|d| d == q));
            if via_derived && matches!(op, BinOp::LtEq | BinOp::Lt) {
                return ValueKind::Rank;
            }
        }
        let counts = |e: &Expr| matches!(e, Expr::Function { name, .. } if name == "COUNT");
        if self.clause == SlotClause::Having && (counts(left) || counts(right)) {
            return ValueKind::Times;
        }
        ValueKind::Value
    }

    fn operand(&mut self, e: &Expr, kind: ValueKind) {
        match (e, self.policy()) {
            (Expr::Literal(lit), Some(policy)) => {
                let value = render_literal(lit);
                match kind {
                    ValueKind::Rank => self.slot("[n_rank]".into(), value, SlotRole::Rank, None),
                    ValueKind::Times => self.slot("[n_times]".into(), value, SlotRole::Times, None),
                    ValueKind::Value => {
                        let ph = if policy == MaskPolicy::NlqNorm {
                            "[val_placeholder]".to_string()
                        } else {
                            format!("{{val{}}}", self.values)
                        };
                        self.values += 1;
                        self.slot(ph, value, SlotRole::Value, None)
                    }
                }
            }
            _ => self.expr(e),
        }
    }

    fn comparison_op(&mut self, left: &Expr, op: BinOp, right: &Expr) {
        let scalar = |e: &Expr| matches!(e, Expr::Subquery(_) | Expr::Token(_));
        if self.structural() && scalar(left) && scalar(right) {
            self.slot(
                "[comparison]".into(),
                op.symbol().to_string(),
                SlotRole::Comparison,
                None,
            );
        } else {
            self.push(op.symbol());
        }
    }

    pub fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Column(c) => {
                if self.abstract_names() {
                    let detail = Some(c.to_string());
                    if let Some(q) = &c.qualifier {
                        self.name(q, SlotRole::Table, None);
                        self.push(".");
                    }
                    self.name(&c.name, SlotRole::Column, detail);
                } else {
                    self.push(&c.to_string());
                }
            }
            Expr::Literal(l) => self.push(&render_literal(l)),
            Expr::Unary { op, expr } => {
                match op {
                    UnaryOp::Neg => {
                        self.push("-");
                        // Keep `- -x` from lexing as a comment.
                        let negative = matches!(
                            **expr,
                            Expr::Unary {
                                op: UnaryOp::Neg,
                                ..
                            } | Expr::Literal(Literal::Integer(i64::MIN..=-1))
                        ) || matches!(**expr, Expr::Literal(Literal::Real(v)) if v.is_sign_negative());
                        if negative {
                            self.push(" ");
                        }
                    }
                    UnaryOp::Not => self.push("NOT "),
                }
                self.expr(expr);
            }
            Expr::Binary { left, op, right } => {
                if op.is_comparison() && self.structural() {
                    self.expr(left);
                    self.push(" ");
                    self.comparison_op(left, *op, right);
                    self.push(" ");
                    self.expr(right);
                } else {
                    self.expr(left);
                    self.push(&format!(" {} ", op.symbol()));
                    self.expr(right);
                }
            }
            Expr::Function {
                name,
                distinct,
                args,
            } => {
                let masked_agg =
                    self.structural() && matches!(name.as_str(), "MIN" | "MAX" | "AVG" | "SUM");
                if masked_agg {
                    self.slot(
                        "[agg_function]".into(),
                        name.clone(),
                        SlotRole::Aggregate,
                        None,
                    );
                } else {
                    self.push(name);
                }
                self.push("(");
                if *distinct {
                    self.push("DISTINCT ");
                }
                match args {
                    FuncArgs::Star => self.push("*"),
                    FuncArgs::List(list) => self.expr_list(list),
                }
                self.push(")");
            }
            Expr::Window { name, order_by } => {
                self.push(name);
                self.push("() OVER ( ORDER BY ");
                self.order_items(order_by);
                self.push(" )");
            }
            Expr::IsNull { expr, negated } => {
                self.expr(expr);
                self.push(if *negated { " IS NOT NULL" } else { " IS NULL" });
            }
            Expr::InList { .. } | Expr::Between { .. } => self.condition(e),
            Expr::InSource {
                expr,
                source,
                negated,
            } => {
                self.expr(expr);
                self.push(if *negated { " NOT IN ( " } else { " IN ( " });
                match source {
                    Source::Query(q) => self.select(q),
                    Source::Token(t) => self.token(*t),
                }
                self.push(" )");
            }
            Expr::Subquery(q) => {
                self.push("( ");
                self.select(q);
                self.push(" )");
            }
            Expr::Token(t) => {
                self.push("( ");
                self.token(*t);
                self.push(" )");
            }
            Expr::Nested(inner) => {
                self.push("( ");
                self.expr(inner);
                self.push(" )");
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueKind {
    Value,
    Rank,
    Times,
}
