//! SQL dialect: parsing, canonical rendering, masking and tree rewriting.

mod ast;
mod lexer;
mod mask;
mod parser;
mod render;
mod visit;

pub use ast::*;
pub use mask::{
    classify_conjunct, mask_statement, unmask, ConjunctClass, MaskConfig, MaskPolicy, Slot,
    SlotClause, SlotRole, SqlTemplate, DEFAULT_TEMPORAL_COLUMNS,
};
pub use parser::{parse_select, parse_sql};
pub use render::{format_real, render_expr, render_literal, render_select, render_sql};
pub use visit::{
    collect_columns, expr_columns, extract_token_refs, map_site_tokens, map_tokens,
    rewrite_tokens, select_columns, substitute_turn, token_sites, visit_statement_sites,
    Replacement, Site, SiteKind,
};
pub(crate) use visit::visit_select;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { message: String, pos: usize },
    #[error("unsupported construct at byte {pos}: {construct}")]
    Unsupported { construct: String, pos: usize },
}

impl SqlError {
    pub(crate) fn syntax(message: impl Into<String>, pos: usize) -> Self {
        SqlError::Syntax {
            message: message.into(),
            pos,
        }
    }

    pub(crate) fn unsupported(construct: impl Into<String>, pos: usize) -> Self {
        SqlError::Unsupported {
            construct: construct.into(),
            pos,
        }
    }
}

/// Parse and re-render in canonical form.
pub fn canonicalize(text: &str) -> Result<String, SqlError> {
    Ok(render_sql(&parse_sql(text)?))
}
