//! Homomorphic query circuits.
//!
//! Every gate goes through an [`Evaluator`], which counts operations, keeps
//! ciphertexts short by reducing them modulo the public multiple of the key
//! modulus, and, when a bootstrap key is loaded, refreshes operands whose
//! noise would otherwise overflow. No gate looks at a plaintext: the sequence
//! of operations depends only on the table shape and the query shape.

mod arith;
mod compare;
pub mod noise;
mod query;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_bigint::BigUint;
use thiserror::Error;

use crate::data::DataError;
use crate::he::{self, recrypt, recrypt_noise_bits, BootstrapKey, Ciphertext, HeError, PublicKey};

pub use arith::{counter_width, encrypted_add, multiply_words, prefix_sums, ripple_add, EncryptedCounter};
pub use compare::{
    eq_index, gt_index, lt_index, pattern_index, significance_order, EncryptedPattern, PatternMask,
};
pub use query::{
    count_where, delete_where, match_indices, nth_match_index, select_nth, sum_where,
    update_where, MatchIndexVector, Operand, PredOp, Predicate,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("width mismatch: expected {expected} bits, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("pattern of {len} characters exceeds the column's {chars}")]
    PatternTooLong { len: usize, chars: usize },
    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),
    #[error("column {0} is not an unsigned column")]
    NotNumeric(String),
    #[error("noise estimate of {noise_bits} bits reaches the limit of {limit}")]
    NoiseBudget { noise_bits: u64, limit: u64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    He(#[from] HeError),
}

/// Snapshot of the operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct OpCounts {
    pub additions: u64,
    pub multiplications: u64,
    pub recrypts: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.additions + self.multiplications
    }

    /// 24-byte big-endian encoding: additions, multiplications, recrypts.
    pub fn to_bytes(&self) -> [u8; 24] {
        let mut out = [0u8; 24];
        out[..8].copy_from_slice(&self.additions.to_be_bytes());
        out[8..16].copy_from_slice(&self.multiplications.to_be_bytes());
        out[16..].copy_from_slice(&self.recrypts.to_be_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; 24]) -> Self {
        let word = |i: usize| u64::from_be_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        OpCounts {
            additions: word(0),
            multiplications: word(8),
            recrypts: word(16),
        }
    }
}

/// Concurrent operation tallies.
#[derive(Debug, Default)]
pub struct OpCounters {
    additions: AtomicU64,
    multiplications: AtomicU64,
    recrypts: AtomicU64,
}

impl OpCounters {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            additions: self.additions.load(Ordering::Relaxed),
            multiplications: self.multiplications.load(Ordering::Relaxed),
            recrypts: self.recrypts.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.additions.store(0, Ordering::Relaxed);
        self.multiplications.store(0, Ordering::Relaxed);
        self.recrypts.store(0, Ordering::Relaxed);
    }
}

/// Single-gate faults for checking that the differential oracle has teeth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fault {
    /// Equality factor computed as `c xor v`, dropping the constant one.
    EqFactorXor,
    /// Comparator terms lose their higher-bits-equal factor.
    LtDropPrefix,
    /// Counter increment adds with AND instead of XOR.
    IncrementAnd,
    /// The n-th match index forgets to multiply by `I_R`.
    NthDropMatch,
    /// UPDATE keeps `I_R * R` instead of `not(I_R) * R`.
    UpdateDropNot,
    /// DELETE keeps `I_R * R`.
    DeleteDropNot,
    /// Patterns skip the zero-padding check.
    PatternDropPadding,
    /// SELECT combines masked rows with AND.
    SelectCombineAnd,
}

impl Fault {
    pub const ALL: [Fault; 8] = [
        Fault::EqFactorXor,
        Fault::LtDropPrefix,
        Fault::IncrementAnd,
        Fault::NthDropMatch,
        Fault::UpdateDropNot,
        Fault::DeleteDropNot,
        Fault::PatternDropPadding,
        Fault::SelectCombineAnd,
    ];
}

struct Bootstrapper {
    pk: Arc<PublicKey>,
    bk: Arc<BootstrapKey>,
}

/// Gate evaluator shared by all circuits of one query.
pub struct Evaluator {
    counters: OpCounters,
    reduction: Option<BigUint>,
    noise_limit: Option<u64>,
    bootstrap: Option<Bootstrapper>,
    #[cfg_attr(not(feature = "faults"), allow(dead_code))]
    fault: Option<Fault>,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self::new()
    }
}

impl Evaluator {
    /// Plain evaluator: no reduction, no refresh, no budget.
    pub fn new() -> Self {
        Evaluator {
            counters: OpCounters::default(),
            reduction: None,
            noise_limit: None,
            bootstrap: None,
            fault: None,
        }
    }

    /// Reduces every gate output modulo `x0`.
    pub fn with_reduction(mut self, x0: BigUint) -> Self {
        self.reduction = (x0.bits() > 0).then_some(x0);
        self
    }

    /// Ciphertexts whose estimate reaches `limit` make [`Evaluator::check_budget`] fail.
    pub fn with_noise_limit(mut self, limit: u64) -> Self {
        self.noise_limit = Some(limit);
        self
    }

    /// Enables recryption. The key's modulus must leave room for the product
    /// of two refreshed ciphertexts.
    pub fn with_bootstrap(mut self, pk: Arc<PublicKey>, bk: Arc<BootstrapKey>) -> Result<Self, HeError> {
        let params = pk.params();
        let refreshed = recrypt_noise_bits(params);
        if 2 * refreshed >= params.noise_limit() {
            return Err(HeError::InvalidParams(format!(
                "modulus of {} bits cannot bootstrap: refreshed ciphertexts carry {refreshed} bits of noise",
                params.p_bits()
            )));
        }
        if bk.enc_s().len() != params.beta() as usize {
            return Err(HeError::InvalidParams("bootstrap key does not match the public key".into()));
        }
        self.reduction = Some(pk.x0().clone());
        self.noise_limit = Some(params.noise_limit());
        self.bootstrap = Some(Bootstrapper { pk, bk });
        Ok(self)
    }

    #[cfg(feature = "faults")]
    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    #[cfg(feature = "faults")]
    pub(crate) fn faulty(&self, f: Fault) -> bool {
        self.fault == Some(f)
    }

    #[cfg(not(feature = "faults"))]
    #[inline(always)]
    pub(crate) fn faulty(&self, _f: Fault) -> bool {
        false
    }

    pub fn counts(&self) -> OpCounts {
        self.counters.snapshot()
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn noise_limit(&self) -> Option<u64> {
        self.noise_limit
    }

    pub fn bootstrapping(&self) -> bool {
        self.bootstrap.is_some()
    }

    pub fn one(&self) -> Ciphertext {
        Ciphertext::trivial(true)
    }

    pub fn zero(&self) -> Ciphertext {
        Ciphertext::trivial(false)
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.counters.additions.fetch_add(1, Ordering::Relaxed);
        if let Some(limit) = self.refresh_limit() {
            if a.noise_bits().max(b.noise_bits()) + 1 >= limit {
                let (a, b) = self.make_room(a, b, |x, y| x.max(y) + 1, limit);
                return self.reduce(he::add(&a, &b));
            }
        }
        self.reduce(he::add(a, b))
    }

    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.counters.multiplications.fetch_add(1, Ordering::Relaxed);
        if let Some(limit) = self.refresh_limit() {
            if a.noise_bits() + b.noise_bits() >= limit {
                let (a, b) = self.make_room(a, b, |x, y| x + y, limit);
                return self.reduce(he::mul(&a, &b));
            }
        }
        self.reduce(he::mul(a, b))
    }

    /// `1 xor a`.
    pub fn not(&self, a: &Ciphertext) -> Ciphertext {
        self.add(&self.one(), a)
    }

    /// `1 xor a xor b`: one exactly when the bits agree.
    pub fn xnor(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.add(&self.not(a), b)
    }

    /// XOR of all inputs, combined as a balanced tree.
    pub fn xor_all(&self, mut items: Vec<Ciphertext>) -> Ciphertext {
        if items.is_empty() {
            return self.zero();
        }
        while items.len() > 1 {
            let mut next = Vec::with_capacity(items.len().div_ceil(2));
            let mut it = items.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(self.add(&a, &b)),
                    None => next.push(a),
                }
            }
            items = next;
        }
        items.pop().expect("non-empty")
    }

    /// AND of all inputs; the empty product is a trivial one.
    pub fn and_all<'a>(&self, items: impl IntoIterator<Item = &'a Ciphertext>) -> Ciphertext {
        let mut it = items.into_iter();
        match it.next() {
            None => self.one(),
            Some(first) => it.fold(first.clone(), |acc, x| self.mul(&acc, x)),
        }
    }

    /// Refreshes `ct` unconditionally. Requires a bootstrap key.
    pub fn recrypt(&self, ct: &Ciphertext) -> Result<Ciphertext, HeError> {
        let b = self.bootstrap.as_ref().ok_or(HeError::BootstrapUnavailable)?;
        self.counters.recrypts.fetch_add(1, Ordering::Relaxed);
        recrypt(ct, Some(&b.bk), &b.pk)
    }

    /// Fails when a ciphertext is beyond the configured noise limit.
    pub fn check_budget<'a>(&self, cts: impl IntoIterator<Item = &'a Ciphertext>) -> Result<(), CircuitError> {
        let Some(limit) = self.noise_limit else {
            return Ok(());
        };
        let worst = cts.into_iter().map(Ciphertext::noise_bits).max().unwrap_or(0);
        if worst >= limit {
            return Err(CircuitError::NoiseBudget {
                noise_bits: worst,
                limit,
            });
        }
        Ok(())
    }

    fn refresh_limit(&self) -> Option<u64> {
        self.bootstrap.as_ref().map(|b| b.pk.params().noise_limit())
    }

    /// Recrypts the noisier operand, then the other, until `out(a, b)` fits.
    fn make_room(
        &self,
        a: &Ciphertext,
        b: &Ciphertext,
        out: impl Fn(u64, u64) -> u64,
        limit: u64,
    ) -> (Ciphertext, Ciphertext) {
        let mut a = a.clone();
        let mut b = b.clone();
        for _ in 0..2 {
            if out(a.noise_bits(), b.noise_bits()) < limit {
                break;
            }
            let target = if a.noise_bits() >= b.noise_bits() { &mut a } else { &mut b };
            // Operands never exceed the limit: inputs are checked on entry
            // and every gate output is kept below it.
            *target = self
                .recrypt(target)
                .expect("operands stay decryptable while bootstrapping");
        }
        (a, b)
    }

    fn reduce(&self, ct: Ciphertext) -> Ciphertext {
        match &self.reduction {
            Some(x0) if ct.value().bits() > x0.bits() => ct.reduced(x0),
            _ => ct,
        }
    }
}
