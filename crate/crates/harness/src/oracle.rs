//! Plaintext reference semantics for every statement kind.
//!
//! Written directly against the AST and plain values, sharing nothing with
//! the circuit path beyond validation, so that a disagreement between the two
//! points at one of them rather than at a common helper.

use std::cmp::Ordering;

use hedb_core::data::{ColumnKind, ColumnSpec, DataError, TableSchema, Value};
use hedb_core::query::QueryKind;
use hedb_core::sql::{validate, CmpOp, Condition, Literal, QueryAst, QueryResult, SqlError};

/// A plaintext table mirroring an encrypted one: deleted rows stay in place
/// as all-zero records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainTable {
    pub schema: TableSchema,
    pub rows: Vec<Vec<Value>>,
}

impl PlainTable {
    pub fn new(schema: TableSchema) -> Self {
        PlainTable {
            schema,
            rows: Vec::new(),
        }
    }

    /// Appends a row after checking every value fits its column.
    pub fn push(&mut self, row: Vec<Value>) -> Result<(), DataError> {
        if row.len() != self.schema.columns().len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} values for {} columns",
                row.len(),
                self.schema.columns().len()
            )));
        }
        for (v, spec) in row.iter().zip(self.schema.columns()) {
            v.to_bits(spec)?;
        }
        self.rows.push(row);
        Ok(())
    }
}

/// The value every bit-zero word decodes to.
pub fn zero_value(spec: &ColumnSpec) -> Value {
    match spec.kind() {
        ColumnKind::Uint => Value::Uint(0),
        ColumnKind::Str => Value::Str(String::new()),
    }
}

fn padded(s: &str, chars: usize) -> Vec<u8> {
    let mut b = s.as_bytes().to_vec();
    b.resize(chars.max(b.len()), 0);
    b
}

/// `'?'` matches any byte, padding included; a final `'*'` accepts any
/// tail; otherwise every byte past the pattern must be padding.
fn pattern_matches(pattern: &str, value: &[u8]) -> bool {
    let (body, open) = match pattern.strip_suffix('*') {
        Some(b) => (b.as_bytes(), true),
        None => (pattern.as_bytes(), false),
    };
    if body.len() > value.len() {
        return false;
    }
    let head_ok = body.iter().zip(value).all(|(&p, &v)| p == b'?' || p == v);
    head_ok && (open || value[body.len()..].iter().all(|&b| b == 0))
}

fn is_pattern(spec: &ColumnSpec, lit: &Literal) -> bool {
    matches!(lit, Literal::Str(s) if spec.kind() == ColumnKind::Str && (s.contains('?') || s.contains('*')))
}

fn row_matches(spec: &ColumnSpec, value: &Value, cond: &Condition) -> bool {
    let ord = match (value, &cond.literal) {
        (Value::Uint(v), Literal::Uint(l)) => v.cmp(l),
        (Value::Str(v), Literal::Str(l)) => {
            let v = padded(v, spec.chars());
            if is_pattern(spec, &cond.literal) {
                return pattern_matches(l, &v);
            }
            v.as_slice().cmp(padded(l, spec.chars()).as_slice())
        }
        _ => unreachable!("validated literal type"),
    };
    match cond.op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
    }
}

fn literal_value(lit: &Literal) -> Value {
    match lit {
        Literal::Uint(v) => Value::Uint(*v),
        Literal::Str(s) => Value::Str(s.clone()),
    }
}

/// Executes `ast` on `t`, mutating it for UPDATE and DELETE. `n` is the
/// 1-based match SELECT returns.
pub fn oracle_execute(t: &mut PlainTable, ast: &QueryAst, n: u64) -> Result<QueryResult, SqlError> {
    validate(ast, &t.schema)?;
    let (col, spec) = t
        .schema
        .column(&ast.predicate.column)
        .map(|(i, s)| (i, s.clone()))
        .expect("validated column");
    let hits: Vec<bool> = t
        .rows
        .iter()
        .map(|r| row_matches(&spec, &r[col], &ast.predicate))
        .collect();
    let matching = || t.rows.iter().zip(&hits).filter(|(_, &h)| h).map(|(r, _)| r);

    Ok(match ast.kind {
        QueryKind::Select => {
            if n == 0 {
                return Err(SqlError::InvalidMatchNumber);
            }
            let picked = usize::try_from(n - 1).ok().and_then(|k| matching().nth(k));
            QueryResult::Record(match picked {
                Some(r) => r.clone(),
                None => t.schema.columns().iter().map(zero_value).collect(),
            })
        }
        QueryKind::Count => QueryResult::Count(matching().count() as u64),
        QueryKind::Avg => {
            let target = ast.target.as_deref().expect("validated target");
            let (ti, _) = t.schema.column(target).expect("validated target");
            let mut sum = 0u128;
            let mut count = 0u64;
            for r in matching() {
                if let Value::Uint(v) = r[ti] {
                    sum += u128::from(v);
                }
                count += 1;
            }
            QueryResult::Avg { sum, count }
        }
        QueryKind::Update => {
            let new_row: Vec<Value> = t
                .schema
                .columns()
                .iter()
                .map(|c| {
                    let (_, lit) = ast
                        .assignments
                        .iter()
                        .find(|(name, _)| name == c.name())
                        .expect("validated assignments");
                    literal_value(lit)
                })
                .collect();
            for (row, _) in t.rows.iter_mut().zip(&hits).filter(|(_, &h)| h) {
                *row = new_row.clone();
            }
            QueryResult::Ack
        }
        QueryKind::Delete => {
            let zeros: Vec<Value> = t.schema.columns().iter().map(zero_value).collect();
            for (row, _) in t.rows.iter_mut().zip(&hits).filter(|(_, &h)| h) {
                *row = zeros.clone();
            }
            QueryResult::Ack
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_by_hand() {
        assert!(pattern_matches("a?c", b"abc\0"));
        assert!(!pattern_matches("a?c", b"abcd"));
        assert!(pattern_matches("a?c*", b"abcd"));
        assert!(pattern_matches("ab??", b"ab\0\0"));
        assert!(pattern_matches("*", b"\0\0"));
        assert!(!pattern_matches("abcde", b"abcd"));
    }
}
