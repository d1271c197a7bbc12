use rayon::prelude::*;

use crate::data::{ColumnKind, ColumnSpec, EncryptedRecord, EncryptedTable, EncryptedWord};
use crate::he::Ciphertext;

use super::arith::{counter_width, encrypted_add, prefix_sums, EncryptedCounter};
use super::compare::{eq_index, lt_index, pattern_index, significance_order, EncryptedPattern};
use super::{CircuitError, Evaluator, Fault};

/// One encrypted match bit `I_R` per table row.
pub type MatchIndexVector = Vec<Ciphertext>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredOp {
    Eq,
    Lt,
    Gt,
    Pattern,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Word(EncryptedWord),
    Pattern(EncryptedPattern),
}

/// `column op operand` with an encrypted operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub column: String,
    pub op: PredOp,
    pub operand: Operand,
}

fn column<'a>(t: &'a EncryptedTable, name: &str) -> Result<(usize, &'a ColumnSpec), CircuitError> {
    t.schema()
        .column(name)
        .ok_or_else(|| CircuitError::UnknownColumn(name.to_string()))
}

/// Checks the predicate against the schema before any gate is evaluated.
fn check_predicate(spec: &ColumnSpec, pred: &Predicate) -> Result<(), CircuitError> {
    match (&pred.operand, pred.op) {
        (Operand::Word(w), PredOp::Eq | PredOp::Lt | PredOp::Gt) => {
            if w.width() != spec.bit_width() {
                return Err(CircuitError::WidthMismatch {
                    expected: spec.bit_width(),
                    got: w.width(),
                });
            }
            Ok(())
        }
        (Operand::Pattern(p), PredOp::Pattern) => {
            if spec.kind() != ColumnKind::Str {
                return Err(CircuitError::InvalidPredicate(format!(
                    "patterns apply to string columns, {} is not one",
                    spec.name()
                )));
            }
            if p.mask.len() > spec.chars() {
                return Err(CircuitError::PatternTooLong {
                    len: p.mask.len(),
                    chars: spec.chars(),
                });
            }
            if p.literal_bits.width() != 8 * p.mask.literal_count() {
                return Err(CircuitError::WidthMismatch {
                    expected: 8 * p.mask.literal_count(),
                    got: p.literal_bits.width(),
                });
            }
            Ok(())
        }
        _ => Err(CircuitError::InvalidPredicate(
            "operand kind does not fit the operator".into(),
        )),
    }
}

/// `I_R` for every row, evaluated in parallel.
pub fn match_indices(
    ev: &Evaluator,
    t: &EncryptedTable,
    pred: &Predicate,
) -> Result<MatchIndexVector, CircuitError> {
    let (col, spec) = column(t, &pred.column)?;
    check_predicate(spec, pred)?;
    let order = significance_order(spec.kind(), spec.bit_width());
    let reorder = |w: &[Ciphertext]| -> Vec<Ciphertext> { order.iter().map(|&i| w[i].clone()).collect() };
    let operand_ordered = match &pred.operand {
        Operand::Word(w) if pred.op != PredOp::Eq => Some(reorder(w.bits())),
        _ => None,
    };
    t.rows()
        .par_iter()
        .map(|row| {
            let word = row.words()[col].bits();
            match (&pred.operand, pred.op) {
                (Operand::Word(v), PredOp::Eq) => eq_index(ev, word, v.bits()),
                (Operand::Word(_), PredOp::Lt) => {
                    lt_index(ev, &reorder(word), operand_ordered.as_deref().expect("ordered"))
                }
                (Operand::Word(_), PredOp::Gt) => {
                    lt_index(ev, operand_ordered.as_deref().expect("ordered"), &reorder(word))
                }
                (Operand::Pattern(p), _) => pattern_index(ev, word, p),
                _ => unreachable!("checked by check_predicate"),
            }
        })
        .collect()
}

fn check_eta(eta: &[Ciphertext], rows: usize) -> Result<(), CircuitError> {
    let w = counter_width(rows);
    if eta.len() != w {
        return Err(CircuitError::WidthMismatch {
            expected: w,
            got: eta.len(),
        });
    }
    Ok(())
}

/// `I'_R = I_R * prod_i (1 xor eta_i xor S_{R,i})`: one exactly on the n-th
/// match, where `eta` encrypts n (counted from one).
pub fn nth_match_index(
    ev: &Evaluator,
    idx: &[Ciphertext],
    sums: &[EncryptedCounter],
    eta: &[Ciphertext],
) -> Result<MatchIndexVector, CircuitError> {
    idx.par_iter()
        .zip(sums)
        .map(|(i, s)| {
            let hit = eq_index(ev, eta, s.bits())?;
            if ev.faulty(Fault::NthDropMatch) {
                Ok(hit)
            } else {
                Ok(ev.mul(i, &hit))
            }
        })
        .collect()
}

/// The n-th matching record, or the all-zero record when there are fewer
/// than n matches.
pub fn select_nth(
    ev: &Evaluator,
    t: &EncryptedTable,
    pred: &Predicate,
    eta: &[Ciphertext],
) -> Result<EncryptedRecord, CircuitError> {
    check_eta(eta, t.len())?;
    let idx = match_indices(ev, t, pred)?;
    let sums = prefix_sums(ev, &idx, eta.len());
    let sel = nth_match_index(ev, &idx, &sums, eta)?;
    let masked: Vec<Vec<Ciphertext>> = t
        .rows()
        .par_iter()
        .zip(&sel)
        .map(|(row, s)| row.bits().map(|b| ev.mul(s, b)).collect())
        .collect();
    let width = t.schema().record_bits();
    let bits: Vec<Ciphertext> = (0..width)
        .into_par_iter()
        .map(|j| {
            let column: Vec<Ciphertext> = masked.iter().map(|r| r[j].clone()).collect();
            if ev.faulty(Fault::SelectCombineAnd) && !column.is_empty() {
                ev.and_all(&column)
            } else {
                ev.xor_all(column)
            }
        })
        .collect();
    Ok(EncryptedRecord::from_bits(bits, t.schema())?)
}

/// Every matching row becomes `u`: `R' = not(I_R) * R + I_R * U`.
pub fn update_where(
    ev: &Evaluator,
    t: &EncryptedTable,
    pred: &Predicate,
    u: &EncryptedRecord,
) -> Result<EncryptedTable, CircuitError> {
    u.check_schema(t.schema())?;
    let idx = match_indices(ev, t, pred)?;
    let u_bits: Vec<&Ciphertext> = u.bits().collect();
    let rows = t
        .rows()
        .par_iter()
        .zip(&idx)
        .map(|(row, i)| {
            let keep = if ev.faulty(Fault::UpdateDropNot) {
                i.clone()
            } else {
                ev.not(i)
            };
            let bits = row
                .bits()
                .zip(&u_bits)
                .map(|(r, x)| ev.add(&ev.mul(&keep, r), &ev.mul(i, x)))
                .collect();
            EncryptedRecord::from_bits(bits, t.schema())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncryptedTable::with_rows(t.schema().clone(), rows)?)
}

/// Every matching row becomes all zeros: `R' = not(I_R) * R`.
pub fn delete_where(ev: &Evaluator, t: &EncryptedTable, pred: &Predicate) -> Result<EncryptedTable, CircuitError> {
    let idx = match_indices(ev, t, pred)?;
    let rows = t
        .rows()
        .par_iter()
        .zip(&idx)
        .map(|(row, i)| {
            let keep = if ev.faulty(Fault::DeleteDropNot) {
                i.clone()
            } else {
                ev.not(i)
            };
            let bits = row.bits().map(|r| ev.mul(&keep, r)).collect();
            EncryptedRecord::from_bits(bits, t.schema())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncryptedTable::with_rows(t.schema().clone(), rows)?)
}

fn count_bits(ev: &Evaluator, bits: &[Ciphertext], width: usize) -> EncryptedCounter {
    let zeros: Vec<Ciphertext> = (0..width).map(|_| ev.zero()).collect();
    EncryptedWord::new(bits.iter().fold(zeros, |acc, b| encrypted_add(ev, &acc, b)))
}

/// Number of matching rows in `counter_width(rows)` bits.
pub fn count_where(ev: &Evaluator, t: &EncryptedTable, pred: &Predicate) -> Result<EncryptedCounter, CircuitError> {
    let idx = match_indices(ev, t, pred)?;
    Ok(count_bits(ev, &idx, counter_width(t.len())))
}

/// Per-bit column counters of the matching values of `target`: counter `j`
/// holds `sum_R I_R x_{R,j}`, so the sum is `sum_j 2^j C_j`.
pub fn sum_where(
    ev: &Evaluator,
    t: &EncryptedTable,
    pred: &Predicate,
    target: &str,
) -> Result<Vec<EncryptedCounter>, CircuitError> {
    let (col, spec) = column(t, target)?;
    if spec.kind() != ColumnKind::Uint {
        return Err(CircuitError::NotNumeric(target.to_string()));
    }
    let idx = match_indices(ev, t, pred)?;
    let width = counter_width(t.len());
    Ok((0..spec.bit_width())
        .into_par_iter()
        .map(|j| {
            let masked: Vec<Ciphertext> = t
                .rows()
                .iter()
                .zip(&idx)
                .map(|(row, i)| ev.mul(i, &row.words()[col].bits()[j]))
                .collect();
            count_bits(ev, &masked, width)
        })
        .collect())
}
