//! Decomposition of nested text-to-SQL queries into multi-turn sequential
//! interactions, plus the tooling around them.

pub mod bench;
pub mod corpus;
pub mod decompose;
pub mod eval;
pub mod io;
pub mod nlq;
pub mod prompt;
pub mod session;
pub mod split;
pub mod sql;
pub mod synth;
