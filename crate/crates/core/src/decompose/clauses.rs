use super::{DecomposeConfig, Origin, TurnSql};
use crate::sql::{
    classify_conjunct, expr_columns, ConjunctClass, Expr, Extension, FromClause, FuncArgs,
    Refinement, Select, SelectItem, Source, Statement, TableFactor, TokenRef,
};

enum Step {
    Clauses(Vec<Extension>),
    Aggregate { item: Expr, alias: Option<String> },
}

/// Split one query by clause: a base SELECT, then one refinement turn per
/// peeled WHERE group, ORDER BY/LIMIT, HAVING, and finally an aggregation
/// over the previous turn.
///
/// Returned turns are numbered from 1 and refinement bases use that local
/// numbering; tokens already present in `select` are left untouched.
pub fn decompose_clauses(select: &Select, config: &DecomposeConfig) -> Vec<TurnSql> {
    if select.from.is_none() {
        return vec![TurnSql::new(1, select.clone(), Origin::Stage1)];
    }
    if config.is_atomic(select) {
        return vec![TurnSql::new(1, select.clone(), Origin::Atomic)];
    }
    let aliases: Vec<String> = select
        .derived_aliases()
        .into_iter()
        .map(String::from)
        .collect();
    let mentions_alias = |e: &Expr| {
        expr_columns(e)
            .iter()
            .any(|c| c.qualifier.as_ref().is_some_and(|q| aliases.contains(q)))
    };

    let mut base = select.clone();
    let mut steps = Vec::new();

    if let Some(pred) = base.selection.take() {
        let conj: Vec<Expr> = pred.conjuncts().into_iter().cloned().collect();
        if conj.iter().any(&mentions_alias) {
            base.selection = Some(pred);
        } else {
            let (keep, groups) = group_conjuncts(&conj, select, config);
            base.selection = Expr::conjoin(keep);
            let mut has_where = base.selection.is_some();
            for g in groups {
                let p = Expr::conjoin(g).expect("non-empty group");
                steps.push(Step::Clauses(vec![if has_where {
                    Extension::And(p)
                } else {
                    Extension::Where(p)
                }]));
                has_where = true;
            }
        }
    }

    if !base.order_by.is_empty() && !base.order_by.iter().any(|o| mentions_alias(&o.expr)) {
        let mut ext = vec![Extension::OrderBy(std::mem::take(&mut base.order_by))];
        if let Some(l) = base.limit.take() {
            ext.push(Extension::Limit(l));
        }
        steps.push(Step::Clauses(ext));
    }

    if let Some(h) = base.having.take() {
        if mentions_alias(&h) {
            base.having = Some(h);
        } else {
            steps.push(Step::Clauses(vec![Extension::Having(h)]));
        }
    }

    if let Some((column, item, alias)) = peelable_aggregate(select) {
        base.items = vec![SelectItem::Expr {
            expr: column,
            alias: None,
        }];
        steps.push(Step::Aggregate { item, alias });
    }

    let mut turns = vec![TurnSql::new(1, base, Origin::Stage1)];
    for step in steps {
        let prev = turns.len();
        let stmt = match step {
            Step::Clauses(clauses) => Statement::Refine(Refinement {
                base: prev,
                clauses,
            }),
            Step::Aggregate { item, alias } => Statement::from(Select {
                items: vec![SelectItem::Expr { expr: item, alias }],
                from: Some(FromClause {
                    first: TableFactor::Derived {
                        source: Source::Token(TokenRef::query(prev)),
                        alias: "t1".to_string(),
                    },
                    joins: Vec::new(),
                }),
                ..Select::default()
            }),
        };
        turns.push(TurnSql::new(prev + 1, stmt, Origin::Stage2));
    }
    turns
}

/// Decide which WHERE conjuncts stay with the base and which are peeled,
/// grouping runs of time-filter or age conjuncts into one group.
fn group_conjuncts(
    conj: &[Expr],
    select: &Select,
    config: &DecomposeConfig,
) -> (Vec<Expr>, Vec<Vec<Expr>>) {
    let mask = &config.mask;
    let classes: Vec<ConjunctClass> = conj
        .iter()
        .map(|c| classify_conjunct(c, &mask.temporal_columns, &mask.age_columns))
        .collect();
    let pinned = |c: &Expr| is_cleansing(c, select) || is_fixed(c, config);

    let mut keep = Vec::new();
    let mut groups: Vec<Vec<Expr>> = Vec::new();
    let mut first_taken = !config.fuse_first_predicate;
    let mut i = 0;
    while i < conj.len() {
        let c = &conj[i];
        if is_cleansing(c, select) {
            keep.push(c.clone());
            i += 1;
            continue;
        }
        if is_fixed(c, config) {
            match groups.last_mut() {
                Some(g) => g.push(c.clone()),
                None => keep.push(c.clone()),
            }
            i += 1;
            continue;
        }
        let mut j = i + 1;
        if classes[i] != ConjunctClass::Plain {
            while j < conj.len() && classes[j] == classes[i] && !pinned(&conj[j]) {
                j += 1;
            }
        }
        let group = conj[i..j].to_vec();
        if first_taken {
            groups.push(group);
        } else {
            keep.extend(group);
            first_taken = true;
        }
        i = j;
    }
    (keep, groups)
}

/// `col IS NOT NULL` where `col` is also selected.
fn is_cleansing(c: &Expr, select: &Select) -> bool {
    let Expr::IsNull {
        expr,
        negated: true,
    } = c
    else {
        return false;
    };
    let Expr::Column(col) = &**expr else {
        return false;
    };
    select.items.iter().any(|item| match item {
        SelectItem::Expr { expr, .. } => expr_columns(expr).contains(&col),
        SelectItem::Wildcard => false,
    })
}

fn is_fixed(c: &Expr, config: &DecomposeConfig) -> bool {
    let cols = expr_columns(c);
    !cols.is_empty()
        && cols
            .iter()
            .all(|col| config.fused_columns.iter().any(|f| *f == col.to_string()))
}

/// A lone `AGG(column)` item (MIN/MAX/AVG/SUM, or COUNT(DISTINCT column))
/// over a query without grouping, ordering or limits. Returns the bare
/// column, the aggregate rewritten over `t1`, and the item alias.
fn peelable_aggregate(select: &Select) -> Option<(Expr, Expr, Option<String>)> {
    if select.items.len() != 1
        || select.distinct
        || !select.group_by.is_empty()
        || select.having.is_some()
        || !select.order_by.is_empty()
        || select.limit.is_some()
    {
        return None;
    }
    let SelectItem::Expr { expr, alias } = &select.items[0] else {
        return None;
    };
    let Expr::Function {
        name,
        distinct,
        args: FuncArgs::List(args),
    } = expr
    else {
        return None;
    };
    let eligible = match name.as_str() {
        "MIN" | "MAX" | "AVG" | "SUM" => !distinct,
        "COUNT" => *distinct,
        _ => false,
    };
    if !eligible || args.len() != 1 {
        return None;
    }
    let Expr::Column(col) = &args[0] else {
        return None;
    };
    let outer = Expr::Function {
        name: name.clone(),
        distinct: *distinct,
        args: FuncArgs::List(vec![Expr::column("t1", &col.name)]),
    };
    Some((args[0].clone(), outer, alias.clone()))
}
