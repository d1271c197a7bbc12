//! Compiled queries and the server-side execution engine.
//!
//! A [`CompiledQuery`] pairs a plaintext [`QueryShape`], which carries only
//! structure, with the encrypted operands. [`execute`] dispatches it to the
//! circuits; it never needs key material.

use num_bigint::BigUint;

use crate::bytes::{put_short_str, ByteReader, DecodeError};
use crate::circuits::{
    count_where, counter_width, delete_where, select_nth, sum_where, update_where, CircuitError,
    EncryptedCounter, EncryptedPattern, Evaluator, Operand, PatternMask, PredOp, Predicate,
};
use crate::data::{EncryptedRecord, EncryptedTable, EncryptedWord, TableSchema};
use crate::he::codec::{read_ciphertext, write_ciphertext};
use crate::he::Ciphertext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    Select,
    Update,
    Delete,
    Count,
    Avg,
}

impl QueryKind {
    pub fn code(self) -> u8 {
        match self {
            QueryKind::Select => 1,
            QueryKind::Update => 2,
            QueryKind::Delete => 3,
            QueryKind::Count => 4,
            QueryKind::Avg => 5,
        }
    }

    pub fn from_code(b: u8) -> Option<Self> {
        Some(match b {
            1 => QueryKind::Select,
            2 => QueryKind::Update,
            3 => QueryKind::Delete,
            4 => QueryKind::Count,
            5 => QueryKind::Avg,
            _ => return None,
        })
    }

    pub fn is_mutation(self) -> bool {
        matches!(self, QueryKind::Update | QueryKind::Delete)
    }

    pub fn name(self) -> &'static str {
        match self {
            QueryKind::Select => "SELECT",
            QueryKind::Update => "UPDATE",
            QueryKind::Delete => "DELETE",
            QueryKind::Count => "COUNT",
            QueryKind::Avg => "AVG",
        }
    }
}

fn op_code(op: PredOp) -> u8 {
    match op {
        PredOp::Eq => 1,
        PredOp::Lt => 2,
        PredOp::Gt => 3,
        PredOp::Pattern => 4,
    }
}

fn op_from_code(b: u8) -> Option<PredOp> {
    Some(match b {
        1 => PredOp::Eq,
        2 => PredOp::Lt,
        3 => PredOp::Gt,
        4 => PredOp::Pattern,
        _ => return None,
    })
}

/// Structure of a query. Holds no literal values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryShape {
    pub kind: QueryKind,
    pub table: String,
    pub column: String,
    pub op: PredOp,
    /// Bits in the encrypted operand: the column width, or eight per
    /// literal character of a pattern.
    pub operand_width: u16,
    pub pattern: Option<PatternMask>,
    /// Width of the encrypted match number; zero unless SELECT.
    pub eta_width: u8,
    /// AVG target column.
    pub target: Option<String>,
}

/// Public evaluation context sent with each query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalContext {
    /// Public multiple of the key modulus; gate outputs are reduced by it.
    pub reduction: Option<BigUint>,
    /// Decryption bound of the key's modulus.
    pub noise_limit: Option<u64>,
}

impl EvalContext {
    /// An evaluator honouring this context, without bootstrapping.
    pub fn evaluator(&self) -> Evaluator {
        let mut ev = Evaluator::new();
        if let Some(x0) = &self.reduction {
            ev = ev.with_reduction(x0.clone());
        }
        if let Some(limit) = self.noise_limit {
            ev = ev.with_noise_limit(limit);
        }
        ev
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledQuery {
    pub shape: QueryShape,
    pub context: EvalContext,
    pub operand: Vec<Ciphertext>,
    pub eta: Vec<Ciphertext>,
    /// Replacement record bits in schema order (UPDATE only).
    pub update: Vec<Ciphertext>,
}

/// What a query returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutput {
    Record(EncryptedRecord),
    Table(EncryptedTable),
    Count(EncryptedCounter),
    Avg {
        sums: Vec<EncryptedCounter>,
        count: EncryptedCounter,
    },
}

impl QueryOutput {
    /// Result ciphertexts in transmission order: record bits in schema
    /// order, counter bits LSB first, or the AVG column counters followed by
    /// the count. Mutations return nothing.
    pub fn result_bits(&self) -> Vec<Ciphertext> {
        match self {
            QueryOutput::Record(r) => r.bits().cloned().collect(),
            QueryOutput::Table(_) => Vec::new(),
            QueryOutput::Count(c) => c.bits().to_vec(),
            QueryOutput::Avg { sums, count } => sums
                .iter()
                .flat_map(|c| c.bits().iter())
                .chain(count.bits())
                .cloned()
                .collect(),
        }
    }

    fn all_bits(&self) -> Box<dyn Iterator<Item = &Ciphertext> + '_> {
        match self {
            QueryOutput::Table(t) => Box::new(t.rows().iter().flat_map(|r| r.bits())),
            QueryOutput::Record(r) => Box::new(r.bits()),
            QueryOutput::Count(c) => Box::new(c.bits().iter()),
            QueryOutput::Avg { sums, count } => {
                Box::new(sums.iter().flat_map(|c| c.bits().iter()).chain(count.bits()))
            }
        }
    }
}

/// Checks that `q` fits `schema` and the table's current row count.
pub fn check_shape(q: &CompiledQuery, schema: &TableSchema, rows: usize) -> Result<(), CircuitError> {
    let s = &q.shape;
    let shape_err = |m: String| Err(CircuitError::InvalidPredicate(m));
    if s.table != schema.table_name() {
        return shape_err(format!("query targets {}, not {}", s.table, schema.table_name()));
    }
    let (_, spec) = schema
        .column(&s.column)
        .ok_or_else(|| CircuitError::UnknownColumn(s.column.clone()))?;
    let expected_operand = match (&s.pattern, s.op) {
        (Some(mask), PredOp::Pattern) => 8 * mask.literal_count(),
        (None, PredOp::Eq | PredOp::Lt | PredOp::Gt) => spec.bit_width(),
        _ => return shape_err("pattern mask and operator disagree".into()),
    };
    if usize::from(s.operand_width) != expected_operand || q.operand.len() != expected_operand {
        return Err(CircuitError::WidthMismatch {
            expected: expected_operand,
            got: q.operand.len(),
        });
    }
    let eta = if s.kind == QueryKind::Select { counter_width(rows) } else { 0 };
    if usize::from(s.eta_width) != eta || q.eta.len() != eta {
        return Err(CircuitError::WidthMismatch {
            expected: eta,
            got: q.eta.len(),
        });
    }
    let update = if s.kind == QueryKind::Update { schema.record_bits() } else { 0 };
    if q.update.len() != update {
        return Err(CircuitError::WidthMismatch {
            expected: update,
            got: q.update.len(),
        });
    }
    match (s.kind, &s.target) {
        (QueryKind::Avg, Some(t)) => {
            schema
                .column(t)
                .ok_or_else(|| CircuitError::UnknownColumn(t.clone()))?;
        }
        (QueryKind::Avg, None) => return shape_err("AVG needs a target column".into()),
        (_, Some(_)) => return shape_err("only AVG takes a target column".into()),
        _ => {}
    }
    Ok(())
}

/// Runs `q` over `table`. The evaluator decides whether gates are reduced,
/// budget-checked or refreshed; inputs and outputs are checked against its
/// noise limit so that an exhausted result is never returned or stored.
pub fn execute(table: &EncryptedTable, q: &CompiledQuery, ev: &Evaluator) -> Result<QueryOutput, CircuitError> {
    check_shape(q, table.schema(), table.len())?;
    ev.check_budget(
        table
            .rows()
            .iter()
            .flat_map(|r| r.bits())
            .chain(&q.operand)
            .chain(&q.eta)
            .chain(&q.update),
    )?;
    let s = &q.shape;
    let operand = match &s.pattern {
        Some(mask) => Operand::Pattern(EncryptedPattern {
            mask: mask.clone(),
            literal_bits: EncryptedWord::new(q.operand.clone()),
        }),
        None => Operand::Word(EncryptedWord::new(q.operand.clone())),
    };
    let pred = Predicate {
        column: s.column.clone(),
        op: s.op,
        operand,
    };
    let out = match s.kind {
        QueryKind::Select => QueryOutput::Record(select_nth(ev, table, &pred, &q.eta)?),
        QueryKind::Update => {
            let u = EncryptedRecord::from_bits(q.update.clone(), table.schema())?;
            QueryOutput::Table(update_where(ev, table, &pred, &u)?)
        }
        QueryKind::Delete => QueryOutput::Table(delete_where(ev, table, &pred)?),
        QueryKind::Count => QueryOutput::Count(count_where(ev, table, &pred)?),
        QueryKind::Avg => {
            let target = s.target.as_deref().expect("checked by check_shape");
            QueryOutput::Avg {
                sums: sum_where(ev, table, &pred, target)?,
                count: count_where(ev, table, &pred)?,
            }
        }
    };
    ev.check_budget(out.all_bits())?;
    Ok(out)
}

/// Appends the shape block.
pub fn write_shape(out: &mut Vec<u8>, s: &QueryShape) {
    out.push(s.kind.code());
    put_short_str(out, &s.table);
    put_short_str(out, &s.column);
    out.push(op_code(s.op));
    out.extend_from_slice(&s.operand_width.to_be_bytes());
    match &s.pattern {
        None => out.push(0),
        Some(m) => {
            out.push(1);
            out.extend_from_slice(&(m.literal.len() as u16).to_be_bytes());
            out.extend(m.literal.iter().map(|&l| u8::from(l)));
            out.push(u8::from(m.prefix_only));
        }
    }
    out.push(s.eta_width);
    put_short_str(out, s.target.as_deref().unwrap_or(""));
}

pub fn read_shape(r: &mut ByteReader<'_>) -> Result<QueryShape, DecodeError> {
    let kind = QueryKind::from_code(r.u8()?).ok_or_else(|| r.invalid("query kind"))?;
    let table = r.short_str()?;
    let column = r.short_str()?;
    let op = op_from_code(r.u8()?).ok_or_else(|| r.invalid("operator"))?;
    let operand_width = r.u16()?;
    let pattern = match r.u8()? {
        0 => None,
        1 => {
            let len = r.u16()? as usize;
            let literal = r
                .take(len)?
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(()),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| r.invalid("pattern mask"))?;
            let prefix_only = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(r.invalid("prefix flag")),
            };
            Some(PatternMask {
                literal,
                prefix_only,
            })
        }
        _ => return Err(r.invalid("pattern flag")),
    };
    let eta_width = r.u8()?;
    let target = Some(r.short_str()?).filter(|t| !t.is_empty());
    Ok(QueryShape {
        kind,
        table,
        column,
        op,
        operand_width,
        pattern,
        eta_width,
        target,
    })
}

/// Shape, context, then the operand, eta and update ciphertexts.
pub fn encode_query(q: &CompiledQuery) -> Vec<u8> {
    let mut out = Vec::new();
    write_shape(&mut out, &q.shape);
    let x0 = q.context.reduction.as_ref().map(BigUint::to_bytes_be).unwrap_or_default();
    out.extend_from_slice(&(x0.len() as u32).to_be_bytes());
    out.extend_from_slice(&x0);
    out.extend_from_slice(&q.context.noise_limit.unwrap_or(0).to_be_bytes());
    out.extend_from_slice(&(q.update.len() as u32).to_be_bytes());
    for ct in q.operand.iter().chain(&q.eta).chain(&q.update) {
        write_ciphertext(&mut out, ct, None);
    }
    out
}

pub fn decode_query(bytes: &[u8]) -> Result<CompiledQuery, DecodeError> {
    let mut r = ByteReader::new(bytes);
    let shape = read_shape(&mut r)?;
    let x0_len = r.u32()? as usize;
    let x0 = r.take(x0_len)?;
    let reduction = (!x0.is_empty()).then(|| BigUint::from_bytes_be(x0));
    let noise_limit = Some(r.u64()?).filter(|&l| l > 0);
    let update_len = r.u32()? as usize;
    let mut read_n = |n: usize| -> Result<Vec<Ciphertext>, DecodeError> {
        // every ciphertext takes at least nine bytes
        if n.saturating_mul(9) > r.remaining() {
            return Err(DecodeError::Truncated { offset: bytes.len() });
        }
        (0..n).map(|_| read_ciphertext(&mut r, None)).collect()
    };
    let operand = read_n(shape.operand_width as usize)?;
    let eta = read_n(shape.eta_width as usize)?;
    let update = read_n(update_len)?;
    if !r.is_empty() {
        return Err(r.invalid("trailing bytes after query"));
    }
    Ok(CompiledQuery {
        shape,
        context: EvalContext {
            reduction,
            noise_limit,
        },
        operand,
        eta,
        update,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> QueryShape {
        QueryShape {
            kind: QueryKind::Select,
            table: "t".into(),
            column: "name".into(),
            op: PredOp::Pattern,
            operand_width: 16,
            pattern: Some(PatternMask {
                literal: vec![true, false, true],
                prefix_only: true,
            }),
            eta_width: 4,
            target: None,
        }
    }

    #[test]
    fn shape_round_trip() {
        let mut out = Vec::new();
        write_shape(&mut out, &shape());
        assert_eq!(read_shape(&mut ByteReader::new(&out)).unwrap(), shape());
    }

    #[test]
    fn query_round_trip() {
        let q = CompiledQuery {
            shape: shape(),
            context: EvalContext {
                reduction: Some(BigUint::from(123456789u64)),
                noise_limit: Some(99),
            },
            operand: (0..16).map(|i| Ciphertext::phantom(i)).collect(),
            eta: (0..4).map(|i| Ciphertext::phantom(i)).collect(),
            update: Vec::new(),
        };
        let bytes = encode_query(&q);
        assert_eq!(decode_query(&bytes).unwrap(), q);
        assert!(decode_query(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_query(&extra).is_err());
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in [
            QueryKind::Select,
            QueryKind::Update,
            QueryKind::Delete,
            QueryKind::Count,
            QueryKind::Avg,
        ] {
            assert_eq!(QueryKind::from_code(k.code()), Some(k));
        }
        assert_eq!(QueryKind::from_code(0), None);
    }
}
