use std::collections::{HashMap, HashSet};

use super::{DecomposeError, Origin, TurnSql};
use crate::sql::{
    extract_token_refs, render_select, select_columns, visit_select, Expr, Select, Site, Source,
    TokenRef,
};

pub(crate) fn ensure_token_free(select: &Select) -> Result<(), DecomposeError> {
    if extract_token_refs(&select.clone().into()).is_empty() {
        Ok(())
    } else {
        Err(DecomposeError::Unsupported(
            "input already contains special tokens".into(),
        ))
    }
}

struct Emitter {
    turns: Vec<TurnSql>,
    seen: HashMap<String, usize>,
}

impl Emitter {
    fn emit(&mut self, q: Select) -> Result<usize, DecomposeError> {
        check_uncorrelated(&q)?;
        let key = render_select(&q);
        if let Some(&i) = self.seen.get(&key) {
            return Ok(i);
        }
        let index = self.turns.len() + 1;
        self.turns.push(TurnSql::new(index, q, Origin::Stage1));
        self.seen.insert(key, index);
        Ok(index)
    }
}

fn check_uncorrelated(q: &Select) -> Result<(), DecomposeError> {
    let visible: HashSet<&str> = q.visible_qualifiers().into_iter().collect();
    for c in select_columns(q) {
        if let Some(qual) = &c.qualifier {
            if !visible.contains(qual.as_str()) {
                return Err(DecomposeError::Unsupported(format!(
                    "correlated subquery referencing {c}"
                )));
            }
        }
    }
    Ok(())
}

/// Split a token-free query by nesting level. Innermost subqueries come
/// first, siblings left to right; identical subqueries share one turn.
/// Derived tables are referenced with QUERY tokens, `IN` and scalar
/// positions with RESULT tokens.
pub fn decompose_nesting(source: &Select) -> Result<Vec<TurnSql>, DecomposeError> {
    ensure_token_free(source)?;
    let mut em = Emitter {
        turns: Vec::new(),
        seen: HashMap::new(),
    };
    let mut outer = source.clone();
    visit_select(&mut outer, &mut |site| -> Result<(), DecomposeError> {
        match site {
            Site::Derived(src) => {
                if let Source::Query(q) = src {
                    let i = em.emit(std::mem::take(&mut **q))?;
                    *src = Source::Token(TokenRef::query(i));
                }
            }
            Site::In(e) => {
                if let Expr::InSource { source, .. } = e {
                    if let Source::Query(q) = source {
                        let i = em.emit(std::mem::take(&mut **q))?;
                        *source = Source::Token(TokenRef::result(i));
                    }
                }
            }
            Site::Scalar(e) => {
                if let Expr::Subquery(q) = e {
                    let i = em.emit(std::mem::take(&mut **q))?;
                    *e = Expr::Token(TokenRef::result(i));
                }
            }
        }
        Ok(())
    })?;
    let index = em.turns.len() + 1;
    em.turns.push(TurnSql::new(index, outer, Origin::Stage1));
    Ok(em.turns)
}
