//! The supported SQL subset.
//!
//! ```text
//! query  := select | update | delete | count | avg
//! select := SELECT * FROM ident WHERE pred
//! update := UPDATE ident SET assign ("," assign)* WHERE pred
//! delete := DELETE FROM ident WHERE pred
//! count  := SELECT COUNT ( * ) FROM ident WHERE pred
//! avg    := SELECT AVG ( ident ) FROM ident WHERE pred
//! pred   := ident ("=" | "<" | ">") literal
//! ```
//!
//! Keywords are case-insensitive, identifiers are case-sensitive, strings
//! are single-quoted with `''` as an escaped quote, and a trailing `;` is
//! accepted. An `=` against a string containing `?` or `*` is a wildcard
//! pattern: `?` matches any one character and a final `*` matches any rest.

mod compile;
mod parse;

use std::fmt;

use thiserror::Error;

use crate::data::DataError;
use crate::query::QueryKind;

pub use compile::{compile, decrypt_output, validate, CheckedQuery, QueryResult};
pub use parse::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported feature at byte {offset}: {feature}")]
    Unsupported { offset: usize, feature: String },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {column} expects a {expected} literal")]
    TypeMismatch { column: String, expected: String },
    #[error("literal does not fit column {0}")]
    ValueOverflow(String),
    #[error("bad pattern: {0}")]
    BadPattern(String),
    #[error("UPDATE must assign every column; missing {0}")]
    PartialUpdateUnsupported(String),
    #[error("column {0} assigned twice")]
    DuplicateAssignment(String),
    #[error("match number must be at least 1")]
    InvalidMatchNumber,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Uint(u64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Uint(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub column: String,
    pub op: CmpOp,
    pub literal: Literal,
}

/// A parsed statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryAst {
    pub kind: QueryKind,
    pub table: String,
    pub predicate: Condition,
    /// UPDATE only.
    pub assignments: Vec<(String, Literal)>,
    /// AVG only.
    pub target: Option<String>,
}

/// Canonical text of a statement; `parse(render(ast)) == ast`.
pub fn render(ast: &QueryAst) -> String {
    let p = &ast.predicate;
    let pred = format!("{} {} {}", p.column, p.op.symbol(), p.literal);
    match ast.kind {
        QueryKind::Select => format!("SELECT * FROM {} WHERE {pred}", ast.table),
        QueryKind::Count => format!("SELECT COUNT(*) FROM {} WHERE {pred}", ast.table),
        QueryKind::Avg => format!(
            "SELECT AVG({}) FROM {} WHERE {pred}",
            ast.target.as_deref().unwrap_or(""),
            ast.table
        ),
        QueryKind::Delete => format!("DELETE FROM {} WHERE {pred}", ast.table),
        QueryKind::Update => {
            let sets: Vec<String> = ast
                .assignments
                .iter()
                .map(|(c, v)| format!("{c} = {v}"))
                .collect();
            format!("UPDATE {} SET {} WHERE {pred}", ast.table, sets.join(", "))
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}
