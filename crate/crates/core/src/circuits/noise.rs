//! Noise planning by dry run.
//!
//! The noise estimate of every gate output depends only on the estimates of
//! its inputs, so running the real circuits over zero-valued phantom
//! ciphertexts yields the exact estimates a real query would reach, at a
//! fraction of the cost.

use crate::data::{ColumnSpec, EncryptedRecord, EncryptedTable, EncryptedWord, TableSchema};
use crate::he::{Ciphertext, HeError, SecurityParams};

use super::{
    count_where, counter_width, delete_where, select_nth, sum_where, update_where, Evaluator,
    Operand, PredOp, Predicate,
};

/// Heaviest workload a key must serve without bootstrapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    /// Largest table, in rows.
    pub rows: usize,
    /// Widest column a predicate may test.
    pub predicate_bits: usize,
    /// UPDATE or DELETE statements a row may pass through before it is read.
    pub mutations: usize,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            rows: 16,
            predicate_bits: 32,
            mutations: 0,
        }
    }
}

fn phantom_word(width: usize, noise: u64) -> EncryptedWord {
    EncryptedWord::new(vec![Ciphertext::phantom(noise); width])
}

fn phantom_table(schema: &TableSchema, rows: usize, noise: u64) -> EncryptedTable {
    let row = EncryptedRecord::from_bits(vec![Ciphertext::phantom(noise); schema.record_bits()], schema)
        .expect("matches schema");
    EncryptedTable::with_rows(schema.clone(), vec![row; rows]).expect("matches schema")
}

fn max_noise<'a>(cts: impl IntoIterator<Item = &'a Ciphertext>) -> u64 {
    cts.into_iter().map(Ciphertext::noise_bits).max().unwrap_or(0)
}

/// Largest noise estimate any statement of `w` produces when stored bits
/// start at `stored` and client operands at `fresh`.
fn pass(schema: &TableSchema, w: &Workload, stored: u64, fresh: u64) -> (u64, u64) {
    let ev = Evaluator::new();
    let t = phantom_table(schema, w.rows.max(1), stored);
    let key = schema.columns()[0].bit_width();
    let eta = phantom_word(counter_width(t.len()), fresh);
    let u = EncryptedRecord::from_bits(vec![Ciphertext::phantom(fresh); schema.record_bits()], schema)
        .expect("matches schema");
    let mut reads = 0;
    let mut writes = 0;
    for op in [PredOp::Eq, PredOp::Lt, PredOp::Gt] {
        let pred = Predicate {
            column: "k".into(),
            op,
            operand: Operand::Word(phantom_word(key, fresh)),
        };
        let sel = select_nth(&ev, &t, &pred, eta.bits()).expect("phantom select");
        reads = reads.max(max_noise(sel.bits()));
        let cnt = count_where(&ev, &t, &pred).expect("phantom count");
        reads = reads.max(max_noise(cnt.bits()));
        let sums = sum_where(&ev, &t, &pred, "v").expect("phantom sum");
        reads = reads.max(max_noise(sums.iter().flat_map(|c| c.bits())));
        let up = update_where(&ev, &t, &pred, &u).expect("phantom update");
        writes = writes.max(max_noise(up.rows().iter().flat_map(|r| r.bits())));
        let del = delete_where(&ev, &t, &pred).expect("phantom delete");
        writes = writes.max(max_noise(del.rows().iter().flat_map(|r| r.bits())));
    }
    (reads, writes)
}

/// Largest noise estimate reached anywhere in `w` when fresh encryptions
/// carry `fresh` bits of noise.
pub fn required_noise_bits(fresh: u64, w: &Workload) -> u64 {
    let key = ColumnSpec::uint("k", w.predicate_bits.clamp(1, 64) as u16)
        .expect("valid width");
    let schema = TableSchema::new("plan", vec![key, ColumnSpec::uint("v", 1).expect("valid")])
        .expect("valid schema");
    let mut stored = fresh;
    let mut worst = fresh;
    for _ in 0..w.mutations {
        let (reads, writes) = pass(&schema, w, stored, fresh);
        worst = worst.max(reads).max(writes);
        stored = writes;
    }
    let (reads, writes) = pass(&schema, w, stored, fresh);
    worst.max(reads).max(writes)
}

/// Parameters for `lambda` whose modulus fits every circuit of `w`,
/// including public-mode encryptions as inputs.
pub fn plan_params(lambda: u32, w: &Workload) -> Result<SecurityParams, HeError> {
    let base = SecurityParams::new(lambda)?;
    let fresh = base.public_noise_bits().max(u64::from(base.n_bits()));
    let needed = required_noise_bits(fresh, w) + 2;
    let p_bits = u32::try_from(needed)
        .map_err(|_| HeError::InvalidParams(format!("workload needs a {needed}-bit modulus")))?;
    SecurityParams::with_p_bits(lambda, p_bits.max(base.p_bits()))
}
