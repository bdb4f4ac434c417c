//! Walking and rewriting the positions where a row source can appear:
//! derived tables, `IN (...)` right-hand sides and scalar subqueries.

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteKind {
    /// Base of a refinement statement.
    RefineBase,
    /// Derived table in FROM/JOIN.
    Derived,
    /// Right-hand side of `IN`.
    In,
    /// Scalar operand position.
    Scalar,
}

/// A mutable handle to a source position.
pub enum Site<'a> {
    Derived(&'a mut Source),
    /// Always an [`Expr::InSource`].
    In(&'a mut Expr),
    /// Always an [`Expr::Subquery`] or [`Expr::Token`].
    Scalar(&'a mut Expr),
}

/// Visit every source position of a query, innermost first and otherwise in
/// rendering order. Subqueries are descended into before their own site is
/// reported.
pub(crate) fn visit_select<E>(
    s: &mut Select,
    f: &mut dyn FnMut(Site<'_>) -> Result<(), E>,
) -> Result<(), E> {
    for item in &mut s.items {
        if let SelectItem::Expr { expr, .. } = item {
            visit_expr(expr, f)?;
        }
    }
    if let Some(from) = &mut s.from {
        visit_factor(&mut from.first, f)?;
        for join in &mut from.joins {
            visit_factor(&mut join.factor, f)?;
            visit_expr(&mut join.on, f)?;
        }
    }
    if let Some(p) = &mut s.selection {
        visit_expr(p, f)?;
    }
    for g in &mut s.group_by {
        visit_expr(g, f)?;
    }
    if let Some(p) = &mut s.having {
        visit_expr(p, f)?;
    }
    for o in &mut s.order_by {
        visit_expr(&mut o.expr, f)?;
    }
    Ok(())
}

fn visit_factor<E>(
    tf: &mut TableFactor,
    f: &mut dyn FnMut(Site<'_>) -> Result<(), E>,
) -> Result<(), E> {
    if let TableFactor::Derived { source, .. } = tf {
        if let Source::Query(q) = source {
            visit_select(q, f)?;
        }
        f(Site::Derived(source))?;
    }
    Ok(())
}

pub(crate) fn visit_expr<E>(
    e: &mut Expr,
    f: &mut dyn FnMut(Site<'_>) -> Result<(), E>,
) -> Result<(), E> {
    match e {
        Expr::Column(_) | Expr::Literal(_) => Ok(()),
        Expr::Subquery(q) => {
            visit_select(q, f)?;
            f(Site::Scalar(e))
        }
        Expr::Token(_) => f(Site::Scalar(e)),
        Expr::InSource { expr, source, .. } => {
            visit_expr(expr, f)?;
            if let Source::Query(q) = source {
                visit_select(q, f)?;
            }
            f(Site::In(e))
        }
        Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Nested(expr) => {
            visit_expr(expr, f)
        }
        Expr::Binary { left, right, .. } => {
            visit_expr(left, f)?;
            visit_expr(right, f)
        }
        Expr::Function { args, .. } => {
            if let FuncArgs::List(list) = args {
                for a in list {
                    visit_expr(a, f)?;
                }
            }
            Ok(())
        }
        Expr::Window { order_by, .. } => {
            for o in order_by {
                visit_expr(&mut o.expr, f)?;
            }
            Ok(())
        }
        Expr::InList { expr, list, .. } => {
            visit_expr(expr, f)?;
            for item in list {
                visit_expr(item, f)?;
            }
            Ok(())
        }
        Expr::Between {
            expr, low, high, ..
        } => {
            visit_expr(expr, f)?;
            visit_expr(low, f)?;
            visit_expr(high, f)
        }
    }
}

fn visit_extensions<E>(
    clauses: &mut [Extension],
    f: &mut dyn FnMut(Site<'_>) -> Result<(), E>,
) -> Result<(), E> {
    for c in clauses {
        match c {
            Extension::Where(p) | Extension::And(p) | Extension::Having(p) => visit_expr(p, f)?,
            Extension::GroupBy(g) => {
                for e in g {
                    visit_expr(e, f)?;
                }
            }
            Extension::OrderBy(items) => {
                for o in items {
                    visit_expr(&mut o.expr, f)?;
                }
            }
            Extension::Limit(_) => {}
        }
    }
    Ok(())
}

/// Visit all source sites of a statement. The refinement base is not a
/// site; callers handle it through [`Refinement::base`].
pub fn visit_statement_sites<E>(
    stmt: &mut Statement,
    f: &mut dyn FnMut(Site<'_>) -> Result<(), E>,
) -> Result<(), E> {
    match stmt {
        Statement::Select(s) => visit_select(s, f),
        Statement::Refine(r) => visit_extensions(&mut r.clauses, f),
    }
}

/// Every token occurrence with its position kind, in rendering order.
pub fn token_sites(stmt: &Statement) -> Vec<(TokenRef, SiteKind)> {
    let mut out = Vec::new();
    if let Statement::Refine(r) = stmt {
        out.push((TokenRef::query(r.base), SiteKind::RefineBase));
    }
    let mut copy = stmt.clone();
    let _ = visit_statement_sites::<()>(&mut copy, &mut |site| {
        match site {
            Site::Derived(Source::Token(t)) => out.push((*t, SiteKind::Derived)),
            Site::In(Expr::InSource {
                source: Source::Token(t),
                ..
            }) => out.push((*t, SiteKind::In)),
            Site::Scalar(Expr::Token(t)) => out.push((*t, SiteKind::Scalar)),
            _ => {}
        }
        Ok(())
    });
    out
}

/// Token occurrences in rendering order.
pub fn extract_token_refs(stmt: &Statement) -> Vec<TokenRef> {
    token_sites(stmt).into_iter().map(|(t, _)| t).collect()
}

/// What a token is replaced with by [`rewrite_tokens`].
#[allow(clippy::large_enum_variant)]
pub enum Replacement {
    Query(Select),
    /// Literal values; valid in `IN` and scalar positions only.
    Values(Vec<Literal>),
}

/// Replace every token in a statement, producing a token-free SELECT.
///
/// The refinement base is resolved first by asking for
/// `(PREV_QUERY{base}, RefineBase)`, which must yield a query.
pub fn rewrite_tokens<E>(
    stmt: &Statement,
    f: &mut dyn FnMut(TokenRef, SiteKind) -> Result<Replacement, E>,
    misplaced: &dyn Fn(TokenRef, SiteKind) -> E,
) -> Result<Select, E> {
    let mut select = match stmt {
        Statement::Select(s) => (**s).clone(),
        Statement::Refine(r) => {
            let tok = TokenRef::query(r.base);
            match f(tok, SiteKind::RefineBase)? {
                Replacement::Query(q) => q.apply(&r.clauses),
                Replacement::Values(_) => return Err(misplaced(tok, SiteKind::RefineBase)),
            }
        }
    };
    visit_select(&mut select, &mut |site| {
        match site {
            Site::Derived(src) => {
                if let Source::Token(t) = *src {
                    match f(t, SiteKind::Derived)? {
                        Replacement::Query(q) => *src = Source::Query(Box::new(q)),
                        Replacement::Values(_) => return Err(misplaced(t, SiteKind::Derived)),
                    }
                }
            }
            Site::In(e) => {
                if let Expr::InSource {
                    expr,
                    source: Source::Token(t),
                    negated,
                } = e
                {
                    let t = *t;
                    match f(t, SiteKind::In)? {
                        Replacement::Query(q) => {
                            if let Expr::InSource { source, .. } = e {
                                *source = Source::Query(Box::new(q));
                            }
                        }
                        Replacement::Values(vals) => {
                            let list = if vals.is_empty() {
                                vec![Expr::Literal(Literal::Null)]
                            } else {
                                vals.into_iter().map(Expr::Literal).collect()
                            };
                            *e = Expr::InList {
                                expr: Box::new((**expr).clone()),
                                list,
                                negated: *negated,
                            };
                        }
                    }
                }
            }
            Site::Scalar(e) => {
                if let Expr::Token(t) = *e {
                    match f(t, SiteKind::Scalar)? {
                        Replacement::Query(q) => *e = Expr::Subquery(Box::new(q)),
                        Replacement::Values(mut vals) => {
                            *e = match vals.len() {
                                0 => Expr::Literal(Literal::Null),
                                1 => Expr::Nested(Box::new(Expr::Literal(vals.remove(0)))),
                                _ => return Err(misplaced(t, SiteKind::Scalar)),
                            };
                        }
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(select)
}

/// Column references of an expression, not descending into subqueries.
/// Returns `None` when the expression contains a subquery or token.
pub fn collect_columns(e: &Expr) -> Option<Vec<&ColumnRef>> {
    fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a ColumnRef>) -> bool {
        match e {
            Expr::Column(c) => {
                out.push(c);
                true
            }
            Expr::Literal(_) => true,
            Expr::Subquery(_) | Expr::Token(_) | Expr::InSource { .. } => false,
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Nested(expr) => {
                walk(expr, out)
            }
            Expr::Binary { left, right, .. } => walk(left, out) && walk(right, out),
            Expr::Function { args, .. } => match args {
                FuncArgs::Star => true,
                FuncArgs::List(list) => list.iter().all(|a| walk(a, out)),
            },
            Expr::Window { order_by, .. } => order_by.iter().all(|o| walk(&o.expr, out)),
            Expr::InList { expr, list, .. } => walk(expr, out) && list.iter().all(|a| walk(a, out)),
            Expr::Between {
                expr, low, high, ..
            } => walk(expr, out) && walk(low, out) && walk(high, out),
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out).then_some(out)
}

/// Column references of an expression, skipping subqueries and tokens.
pub fn expr_columns(e: &Expr) -> Vec<&ColumnRef> {
    fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a ColumnRef>) {
        match e {
            Expr::Column(c) => out.push(c),
            Expr::Literal(_) | Expr::Subquery(_) | Expr::Token(_) => {}
            Expr::InSource { expr, .. }
            | Expr::Unary { expr, .. }
            | Expr::IsNull { expr, .. }
            | Expr::Nested(expr) => walk(expr, out),
            Expr::Binary { left, right, .. } => {
                walk(left, out);
                walk(right, out);
            }
            Expr::Function { args, .. } => {
                if let FuncArgs::List(list) = args {
                    list.iter().for_each(|a| walk(a, out));
                }
            }
            Expr::Window { order_by, .. } => order_by.iter().for_each(|o| walk(&o.expr, out)),
            Expr::InList { expr, list, .. } => {
                walk(expr, out);
                list.iter().for_each(|a| walk(a, out));
            }
            Expr::Between {
                expr, low, high, ..
            } => {
                walk(expr, out);
                walk(low, out);
                walk(high, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out);
    out
}

/// Column references in a query's own clauses, not in nested subqueries.
pub fn select_columns(s: &Select) -> Vec<&ColumnRef> {
    let mut out = Vec::new();
    for item in &s.items {
        if let SelectItem::Expr { expr, .. } = item {
            out.extend(expr_columns(expr));
        }
    }
    if let Some(from) = &s.from {
        for j in &from.joins {
            out.extend(expr_columns(&j.on));
        }
    }
    for e in s.selection.iter().chain(&s.group_by).chain(s.having.iter()) {
        out.extend(expr_columns(e));
    }
    for o in &s.order_by {
        out.extend(expr_columns(&o.expr));
    }
    out
}

/// Rewrite every token of a statement, including a refinement base.
pub fn map_tokens(stmt: &mut Statement, f: &mut dyn FnMut(TokenRef) -> TokenRef) {
    if let Statement::Refine(r) = stmt {
        r.base = f(TokenRef::query(r.base)).turn;
    }
    map_site_tokens(stmt, f);
}

/// Rewrite tokens in source positions only, leaving a refinement base as is.
pub fn map_site_tokens(stmt: &mut Statement, f: &mut dyn FnMut(TokenRef) -> TokenRef) {
    let _ = visit_statement_sites::<()>(stmt, &mut |site| {
        match site {
            Site::Derived(Source::Token(t)) => *t = f(*t),
            Site::In(Expr::InSource {
                source: Source::Token(t),
                ..
            }) => *t = f(*t),
            Site::Scalar(Expr::Token(t)) => *t = f(*t),
            _ => {}
        }
        Ok(())
    });
}

/// Replace tokens pointing at `turn` in source positions with `query`.
pub fn substitute_turn(stmt: &mut Statement, turn: usize, query: &Select) {
    let _ = visit_statement_sites::<()>(stmt, &mut |site| {
        match site {
            Site::Derived(src) => {
                if matches!(src, Source::Token(t) if t.turn == turn) {
                    *src = Source::Query(Box::new(query.clone()));
                }
            }
            Site::In(Expr::InSource { source, .. }) => {
                if matches!(source, Source::Token(t) if t.turn == turn) {
                    *source = Source::Query(Box::new(query.clone()));
                }
            }
            Site::Scalar(e) => {
                if matches!(e, Expr::Token(t) if t.turn == turn) {
                    *e = Expr::Subquery(Box::new(query.clone()));
                }
            }
            _ => {}
        }
        Ok(())
    });
}
