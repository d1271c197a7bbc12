use std::fmt;

use rand::RngCore;

use crate::circuits::{counter_width, PatternMask, PredOp};
use crate::data::{bytes_to_bits, ColumnKind, ColumnSpec, DataError, TableSchema, Value};
use crate::he::{BitEncryptor, Ciphertext, SecretKey};
use crate::query::{CompiledQuery, EvalContext, QueryKind, QueryShape};

use super::{CmpOp, Literal, QueryAst, SqlError};

/// A statement checked against a schema, with its plaintext operand bits.
/// Nothing here leaves the client unencrypted except the shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedQuery {
    ast: QueryAst,
    schema: TableSchema,
    op: PredOp,
    pattern: Option<PatternMask>,
    operand: Vec<bool>,
    /// Replacement record in schema order (UPDATE only).
    update: Vec<bool>,
}

impl CheckedQuery {
    pub fn ast(&self) -> &QueryAst {
        &self.ast
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn kind(&self) -> QueryKind {
        self.ast.kind
    }

    /// The public shape for a table of `rows` rows.
    pub fn shape(&self, rows: usize) -> QueryShape {
        QueryShape {
            kind: self.ast.kind,
            table: self.ast.table.clone(),
            column: self.ast.predicate.column.clone(),
            op: self.op,
            operand_width: self.operand.len() as u16,
            pattern: self.pattern.clone(),
            eta_width: if self.ast.kind == QueryKind::Select {
                counter_width(rows) as u8
            } else {
                0
            },
            target: self.ast.target.clone(),
        }
    }
}

fn has_wildcard(s: &str) -> bool {
    s.contains(['?', '*'])
}

fn literal_value(lit: &Literal) -> Value {
    match lit {
        Literal::Uint(v) => Value::Uint(*v),
        Literal::Str(s) => Value::Str(s.clone()),
    }
}

/// Plaintext bits of `lit` in `spec`'s column, with SQL-level errors.
fn literal_bits(lit: &Literal, spec: &ColumnSpec) -> Result<Vec<bool>, SqlError> {
    literal_value(lit).to_bits(spec).map_err(|e| match e {
        DataError::TypeMismatch { column, expected } => SqlError::TypeMismatch {
            column,
            expected: expected.as_str().to_string(),
        },
        DataError::ValueOverflow { column, .. } => SqlError::ValueOverflow(column),
        other => SqlError::Data(other),
    })
}

fn lookup<'a>(schema: &'a TableSchema, column: &str) -> Result<&'a ColumnSpec, SqlError> {
    schema
        .column(column)
        .map(|(_, spec)| spec)
        .ok_or_else(|| SqlError::UnknownColumn(column.to_string()))
}

/// Checks `ast` against `schema`: names, literal types and widths, pattern
/// placement, complete UPDATE assignments and a numeric AVG target.
pub fn validate(ast: &QueryAst, schema: &TableSchema) -> Result<CheckedQuery, SqlError> {
    if ast.table != schema.table_name() {
        return Err(SqlError::UnknownTable(ast.table.clone()));
    }
    let pred = &ast.predicate;
    let spec = lookup(schema, &pred.column)?;
    let (op, pattern, operand) = match (&pred.literal, pred.op) {
        (Literal::Str(s), op) if has_wildcard(s) && spec.kind() == ColumnKind::Str => {
            if op != CmpOp::Eq {
                return Err(SqlError::BadPattern(format!(
                    "wildcards are only allowed with '=', not '{}'",
                    op.symbol()
                )));
            }
            let (mask, literals) = PatternMask::parse(s).map_err(SqlError::BadPattern)?;
            if mask.len() > spec.chars() {
                return Err(SqlError::BadPattern(format!(
                    "pattern of {} characters exceeds column {} of {}",
                    mask.len(),
                    spec.name(),
                    spec.chars()
                )));
            }
            (PredOp::Pattern, Some(mask), bytes_to_bits(&literals))
        }
        (lit, op) => {
            let op = match op {
                CmpOp::Eq => PredOp::Eq,
                CmpOp::Lt => PredOp::Lt,
                CmpOp::Gt => PredOp::Gt,
            };
            (op, None, literal_bits(lit, spec)?)
        }
    };

    let mut update = Vec::new();
    if ast.kind == QueryKind::Update {
        let mut assigned: Vec<Option<&Literal>> = vec![None; schema.columns().len()];
        for (col, lit) in &ast.assignments {
            let (i, _) = schema
                .column(col)
                .ok_or_else(|| SqlError::UnknownColumn(col.clone()))?;
            if assigned[i].replace(lit).is_some() {
                return Err(SqlError::DuplicateAssignment(col.clone()));
            }
        }
        for (spec, lit) in schema.columns().iter().zip(&assigned) {
            let lit = lit.ok_or_else(|| SqlError::PartialUpdateUnsupported(spec.name().to_string()))?;
            update.extend(literal_bits(lit, spec)?);
        }
    }

    if ast.kind == QueryKind::Avg {
        let target = ast.target.as_deref().unwrap_or("");
        if lookup(schema, target)?.kind() != ColumnKind::Uint {
            return Err(SqlError::TypeMismatch {
                column: target.to_string(),
                expected: ColumnKind::Uint.as_str().to_string(),
            });
        }
    }

    Ok(CheckedQuery {
        ast: ast.clone(),
        schema: schema.clone(),
        op,
        pattern,
        operand,
        update,
    })
}

/// Encrypts every literal of `q` for a table of `rows` rows. `n` is the
/// 1-based match SELECT returns; a match number past the last row is sent
/// as zero, which no prefix sum of a matching row can equal.
pub fn compile(
    q: &CheckedQuery,
    n: u64,
    enc: &dyn BitEncryptor,
    context: EvalContext,
    rows: usize,
    rng: &mut dyn RngCore,
) -> Result<CompiledQuery, SqlError> {
    let shape = q.shape(rows);
    let mut encrypt = |bits: &[bool]| -> Vec<Ciphertext> { bits.iter().map(|&b| enc.encrypt_bit(b, rng)).collect() };
    let eta = if q.kind() == QueryKind::Select {
        if n == 0 {
            return Err(SqlError::InvalidMatchNumber);
        }
        let v = if n > rows as u64 { 0 } else { n };
        let bits: Vec<bool> = (0..shape.eta_width).map(|i| (v >> i) & 1 == 1).collect();
        encrypt(&bits)
    } else {
        Vec::new()
    };
    Ok(CompiledQuery {
        operand: encrypt(&q.operand),
        eta,
        update: encrypt(&q.update),
        shape,
        context,
    })
}

/// A decrypted answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryResult {
    /// The selected row. With no such match every field decrypts to zero.
    Record(Vec<Value>),
    Count(u64),
    Avg { sum: u128, count: u64 },
    /// UPDATE and DELETE return no ciphertexts.
    Ack,
}

impl QueryResult {
    /// Whether a SELECT result is the all-zero record. A stored all-zero
    /// row is indistinguishable from no match.
    pub fn is_empty_record(&self) -> bool {
        matches!(self, QueryResult::Record(vals) if vals.iter().all(Value::is_zero))
    }

    pub fn average(&self) -> Option<f64> {
        match self {
            QueryResult::Avg { sum, count } if *count > 0 => Some(*sum as f64 / *count as f64),
            _ => None,
        }
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryResult::Record(_) if self.is_empty_record() => f.write_str("(no match)"),
            QueryResult::Record(vals) => {
                let cells: Vec<String> = vals.iter().map(Value::to_string).collect();
                f.write_str(&cells.join(" | "))
            }
            QueryResult::Count(c) => write!(f, "{c}"),
            QueryResult::Avg { sum, count } => match self.average() {
                Some(avg) => write!(f, "{avg:.2} (sum {sum}, count {count})"),
                None => write!(f, "(no match)"),
            },
            QueryResult::Ack => f.write_str("OK"),
        }
    }
}

fn decrypt_uint(bits: &[Ciphertext], sk: &SecretKey) -> Result<u128, SqlError> {
    bits.iter().enumerate().try_fold(0u128, |acc, (i, ct)| {
        let b = sk.decrypt(ct).map_err(DataError::from)?;
        Ok(acc | (u128::from(b) << i))
    })
}

fn shape_error(msg: String) -> SqlError {
    SqlError::Data(DataError::SchemaMismatch(msg))
}

/// Decrypts the RESULT ciphertexts of `q`.
pub fn decrypt_output(q: &CheckedQuery, bits: &[Ciphertext], sk: &SecretKey) -> Result<QueryResult, SqlError> {
    match q.kind() {
        QueryKind::Select => {
            let schema = q.schema();
            if bits.len() != schema.record_bits() {
                return Err(shape_error(format!(
                    "{} result bits for a {}-bit record",
                    bits.len(),
                    schema.record_bits()
                )));
            }
            let mut at = 0;
            let mut vals = Vec::with_capacity(schema.columns().len());
            for spec in schema.columns() {
                let w = &bits[at..at + spec.bit_width()];
                let plain = w
                    .iter()
                    .map(|c| sk.decrypt(c))
                    .collect::<Result<Vec<bool>, _>>()
                    .map_err(DataError::from)?;
                vals.push(Value::from_bits(&plain, spec));
                at += spec.bit_width();
            }
            Ok(QueryResult::Record(vals))
        }
        QueryKind::Count => {
            if bits.is_empty() || bits.len() > 64 {
                return Err(shape_error(format!("{}-bit count", bits.len())));
            }
            Ok(QueryResult::Count(decrypt_uint(bits, sk)? as u64))
        }
        QueryKind::Avg => {
            let target = q.ast().target.as_deref().unwrap_or("");
            let tw = lookup(q.schema(), target)?.bit_width();
            let groups = tw + 1;
            if bits.is_empty() || bits.len() % groups != 0 || bits.len() / groups > 64 {
                return Err(shape_error(format!("{} result bits for AVG over {tw} bits", bits.len())));
            }
            let cw = bits.len() / groups;
            let mut sum = 0u128;
            for (j, counter) in bits.chunks(cw).take(tw).enumerate() {
                sum += decrypt_uint(counter, sk)? << j;
            }
            let count = decrypt_uint(&bits[tw * cw..], sk)? as u64;
            Ok(QueryResult::Avg { sum, count })
        }
        QueryKind::Update | QueryKind::Delete => {
            if !bits.is_empty() {
                return Err(shape_error(format!("{} result bits for a mutation", bits.len())));
            }
            Ok(QueryResult::Ack)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, seeded_rng, SecurityParams};
    use crate::sql::parse;
    use proptest::prelude::*;

    fn schema() -> TableSchema {
        TableSchema::new(
            "people",
            vec![
                ColumnSpec::string("name", 4).unwrap(),
                ColumnSpec::uint("age", 8).unwrap(),
            ],
        )
        .unwrap()
    }

    fn check(q: &str) -> Result<CheckedQuery, SqlError> {
        validate(&parse(q).unwrap(), &schema())
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(check("SELECT * FROM other WHERE age = 1"), Err(SqlError::UnknownTable(_))));
        assert!(matches!(check("SELECT * FROM people WHERE height = 1"), Err(SqlError::UnknownColumn(_))));
        assert!(matches!(check("SELECT * FROM people WHERE age = 'x'"), Err(SqlError::TypeMismatch { .. })));
        assert!(matches!(check("SELECT * FROM people WHERE name = 3"), Err(SqlError::TypeMismatch { .. })));
        assert!(matches!(check("SELECT * FROM people WHERE age = 256"), Err(SqlError::ValueOverflow(_))));
        assert!(matches!(check("SELECT * FROM people WHERE name = 'Alice'"), Err(SqlError::ValueOverflow(_))));
        assert!(matches!(check("SELECT * FROM people WHERE name < 'A*'"), Err(SqlError::BadPattern(_))));
        assert!(matches!(check("SELECT * FROM people WHERE name = 'A*b'"), Err(SqlError::BadPattern(_))));
        assert!(matches!(check("SELECT * FROM people WHERE name = 'Ab??c'"), Err(SqlError::BadPattern(_))));
        assert!(matches!(
            check("UPDATE people SET age = 3 WHERE age = 1"),
            Err(SqlError::PartialUpdateUnsupported(c)) if c == "name"
        ));
        assert!(matches!(
            check("UPDATE people SET age = 3, name = 'x', age = 4 WHERE age = 1"),
            Err(SqlError::DuplicateAssignment(_))
        ));
        assert!(matches!(check("SELECT AVG(name) FROM people WHERE age = 1"), Err(SqlError::TypeMismatch { .. })));
        assert!(matches!(check("SELECT AVG(x) FROM people WHERE age = 1"), Err(SqlError::UnknownColumn(_))));
    }

    #[test]
    fn shapes_and_operand_widths() {
        let q = check("SELECT * FROM people WHERE name = 'B?b*'").unwrap();
        let s = q.shape(10);
        assert_eq!(s.op, PredOp::Pattern);
        assert_eq!(s.operand_width, 16);
        assert_eq!(s.eta_width, 4);
        assert!(s.pattern.as_ref().unwrap().prefix_only);
        let q = check("UPDATE people SET age = 3, name = 'x?' WHERE age < 9").unwrap();
        assert_eq!(q.update.len(), 40);
        assert_eq!(q.shape(10).eta_width, 0);
        assert_eq!(q.shape(10).operand_width, 8);
    }

    fn key() -> SecretKey {
        keygen(&SecurityParams::new(2).unwrap(), &mut seeded_rng(3)).unwrap().0
    }

    #[test]
    fn compile_counts_and_randomness() {
        let sk = key();
        let q = check("UPDATE people SET age = 3, name = 'x' WHERE name = 'Bob'").unwrap();
        let a = compile(&q, 1, &sk, EvalContext::default(), 5, &mut seeded_rng(1)).unwrap();
        let b = compile(&q, 1, &sk, EvalContext::default(), 5, &mut seeded_rng(2)).unwrap();
        assert_eq!(a.operand.len(), 32);
        assert_eq!(a.update.len(), 40);
        assert!(a.eta.is_empty());
        assert_ne!(a.operand, b.operand);
        assert_eq!(a.shape, b.shape);
        let sel = check("SELECT * FROM people WHERE age > 3").unwrap();
        assert!(matches!(
            compile(&sel, 0, &sk, EvalContext::default(), 5, &mut seeded_rng(1)),
            Err(SqlError::InvalidMatchNumber)
        ));
        let c = compile(&sel, 9, &sk, EvalContext::default(), 5, &mut seeded_rng(1)).unwrap();
        assert_eq!(c.eta.len(), 3);
        assert!(c.eta.iter().all(|ct| !sk.decrypt(ct).unwrap()));
    }

    #[test]
    fn shape_bytes_hold_no_literal() {
        let sk = key();
        let q = check("SELECT * FROM people WHERE name = 'Zq?x'").unwrap();
        let c = compile(&q, 1, &sk, EvalContext::default(), 3, &mut seeded_rng(1)).unwrap();
        let mut bytes = Vec::new();
        crate::query::write_shape(&mut bytes, &c.shape);
        assert!(!bytes.windows(2).any(|w| w == b"Zq"));
        assert!(!bytes.contains(&b'x'));
    }

    #[test]
    fn decrypt_outputs() {
        let sk = key();
        let mut rng = seeded_rng(4);
        let enc = |v: u64, w: usize, rng: &mut rand_chacha::ChaCha20Rng| -> Vec<Ciphertext> {
            (0..w).map(|i| sk.encrypt_bit((v >> i) & 1 == 1, rng)).collect()
        };
        let cnt = check("SELECT COUNT(*) FROM people WHERE age = 1").unwrap();
        assert_eq!(decrypt_output(&cnt, &enc(5, 3, &mut rng), &sk).unwrap(), QueryResult::Count(5));
        // age has 8 bits: counters C_0 = 1, C_3 = 2, count 3, width 2
        let avg = check("SELECT AVG(age) FROM people WHERE age = 1").unwrap();
        let mut bits = Vec::new();
        for j in 0..8 {
            bits.extend(enc(match j { 0 => 1, 3 => 2, _ => 0 }, 2, &mut rng));
        }
        bits.extend(enc(3, 2, &mut rng));
        let r = decrypt_output(&avg, &bits, &sk).unwrap();
        assert_eq!(r, QueryResult::Avg { sum: 17, count: 3 });
        assert!(decrypt_output(&avg, &bits[1..], &sk).is_err());
        let sel = check("SELECT * FROM people WHERE age = 1").unwrap();
        let mut rec = enc(u64::from_le_bytes(*b"Al\0\0\0\0\0\0"), 32, &mut rng);
        rec.extend(enc(30, 8, &mut rng));
        let r = decrypt_output(&sel, &rec, &sk).unwrap();
        assert_eq!(r, QueryResult::Record(vec![Value::Str("Al".into()), Value::Uint(30)]));
        assert_eq!(r.to_string(), "Al | 30");
        let zero = enc(0, 40, &mut rng);
        assert!(decrypt_output(&sel, &zero, &sk).unwrap().is_empty_record());
    }

    fn mutate(q: &str, pick: usize) -> String {
        const SWAPS: [(&str, &str); 6] = [
            ("people", "peeple"),
            ("age", "agee"),
            ("= 1", "= 'one'"),
            ("= 1", "= 999"),
            ("'Al'", "'Alice'"),
            ("'Al'", "7"),
        ];
        let (from, to) = SWAPS[pick % SWAPS.len()];
        q.replacen(from, to, 1)
    }

    proptest! {
        // every single-token corruption either stays valid or fails with a typed error
        #[test]
        fn mutated_queries_are_rejected_cleanly(pick in 0usize..6, base in 0usize..3) {
            let q = [
                "SELECT * FROM people WHERE age = 1",
                "SELECT * FROM people WHERE name = 'Al'",
                "UPDATE people SET age = 1, name = 'Al' WHERE age = 1",
            ][base];
            let m = mutate(q, pick);
            if m != q {
                prop_assert!(parse(&m).and_then(|a| validate(&a, &schema())).is_err(), "{}", m);
            }
        }
    }
}
