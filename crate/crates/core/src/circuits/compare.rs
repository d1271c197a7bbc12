use crate::data::{ColumnKind, EncryptedWord};
use crate::he::Ciphertext;

use super::{CircuitError, Evaluator, Fault};

/// Public shape of a wildcard pattern: per character, `true` for a literal
/// and `false` for `?`. A trailing `*` sets `prefix_only`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternMask {
    pub literal: Vec<bool>,
    pub prefix_only: bool,
}

impl PatternMask {
    /// Splits a pattern into its mask and literal bytes. `*` is only allowed
    /// as the final character; NUL is never allowed.
    pub fn parse(pattern: &str) -> Result<(PatternMask, Vec<u8>), String> {
        let bytes = pattern.as_bytes();
        let (body, prefix_only) = match bytes.split_last() {
            Some((b'*', body)) => (body, true),
            _ => (bytes, false),
        };
        if let Some(at) = body.iter().position(|&b| b == b'*') {
            return Err(format!("'*' at byte {at} is not the final character"));
        }
        if body.contains(&0) {
            return Err("patterns cannot contain NUL".into());
        }
        let literal: Vec<bool> = body.iter().map(|&b| b != b'?').collect();
        let lits = body.iter().copied().filter(|&b| b != b'?').collect();
        Ok((
            PatternMask {
                literal,
                prefix_only,
            },
            lits,
        ))
    }

    pub fn len(&self) -> usize {
        self.literal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literal.is_empty()
    }

    pub fn literal_count(&self) -> usize {
        self.literal.iter().filter(|&&l| l).count()
    }

    /// Plaintext reference semantics over a NUL-padded column value.
    pub fn matches(&self, literals: &[u8], value: &[u8]) -> bool {
        let mut lits = literals.iter();
        for (k, &is_lit) in self.literal.iter().enumerate() {
            let byte = value.get(k).copied().unwrap_or(0);
            if is_lit && lits.next() != Some(&byte) {
                return false;
            }
        }
        self.prefix_only || value.iter().skip(self.len()).all(|&b| b == 0)
    }
}

/// Encrypted literal characters of a pattern, eight bits each, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedPattern {
    pub mask: PatternMask,
    pub literal_bits: EncryptedWord,
}

/// Bit positions of a word ordered from least to most significant for
/// comparisons. Unsigned words are already LSB first; strings compare as
/// big-endian byte strings, so their last byte is least significant.
pub fn significance_order(kind: ColumnKind, width: usize) -> Vec<usize> {
    match kind {
        ColumnKind::Uint => (0..width).collect(),
        ColumnKind::Str => (0..width / 8)
            .rev()
            .flat_map(|byte| (0..8).map(move |b| byte * 8 + b))
            .collect(),
    }
}

fn check_width(a: &[Ciphertext], b: &[Ciphertext]) -> Result<(), CircuitError> {
    if a.len() != b.len() {
        return Err(CircuitError::WidthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `prod_i (1 xor c_i xor v_i)`.
pub fn eq_index(ev: &Evaluator, row: &[Ciphertext], v: &[Ciphertext]) -> Result<Ciphertext, CircuitError> {
    check_width(row, v)?;
    let factors: Vec<Ciphertext> = row
        .iter()
        .zip(v)
        .map(|(c, x)| {
            if ev.faulty(Fault::EqFactorXor) {
                ev.add(c, x)
            } else {
                ev.xnor(c, x)
            }
        })
        .collect();
    Ok(ev.and_all(&factors))
}

/// `a < b` over words given least significant bit first:
/// `sum_i (1 xor a_i) b_i prod_{j>i} (1 xor a_j xor b_j)`. At most one term
/// is one, so the XOR of the terms is their integer sum.
pub fn lt_index(ev: &Evaluator, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Ciphertext, CircuitError> {
    check_width(a, b)?;
    let mut terms = Vec::with_capacity(a.len());
    let mut higher_equal: Option<Ciphertext> = None;
    for i in (0..a.len()).rev() {
        let mut t = ev.mul(&ev.not(&a[i]), &b[i]);
        if let Some(eq) = &higher_equal {
            if !ev.faulty(Fault::LtDropPrefix) {
                t = ev.mul(&t, eq);
            }
        }
        terms.push(t);
        if i > 0 {
            let e = ev.xnor(&a[i], &b[i]);
            higher_equal = Some(match higher_equal {
                None => e,
                Some(h) => ev.mul(&h, &e),
            });
        }
    }
    Ok(ev.xor_all(terms))
}

/// `a > b`, the comparator with its operands swapped.
pub fn gt_index(ev: &Evaluator, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Ciphertext, CircuitError> {
    lt_index(ev, b, a)
}

/// Wildcard match of a string word holding `row.len() / 8` characters.
pub fn pattern_index(
    ev: &Evaluator,
    row: &[Ciphertext],
    pat: &EncryptedPattern,
) -> Result<Ciphertext, CircuitError> {
    let chars = row.len() / 8;
    let mask = &pat.mask;
    if mask.len() > chars {
        return Err(CircuitError::PatternTooLong {
            len: mask.len(),
            chars,
        });
    }
    let lits = pat.literal_bits.bits();
    if lits.len() != 8 * mask.literal_count() {
        return Err(CircuitError::WidthMismatch {
            expected: 8 * mask.literal_count(),
            got: lits.len(),
        });
    }
    let mut factors = Vec::new();
    let mut next_lit = lits.chunks(8);
    for (k, &is_lit) in mask.literal.iter().enumerate() {
        if is_lit {
            let lit = next_lit.next().expect("literal count checked");
            for (c, x) in row[8 * k..8 * k + 8].iter().zip(lit) {
                factors.push(ev.xnor(c, x));
            }
        }
    }
    if !mask.prefix_only && !ev.faulty(Fault::PatternDropPadding) {
        for c in &row[8 * mask.len()..] {
            factors.push(ev.not(c));
        }
    }
    Ok(ev.and_all(&factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::bytes_to_bits;
    use crate::he::{keygen, seeded_rng, BitEncryptor, SecretKey, SecurityParams};
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (SecretKey, ChaCha20Rng) {
        let params = SecurityParams::with_p_bits(2, 200).unwrap();
        let mut rng = seeded_rng(7);
        let sk = keygen(&params, &mut rng).unwrap().0;
        (sk, rng)
    }

    fn enc(sk: &SecretKey, v: u64, w: usize, rng: &mut ChaCha20Rng) -> Vec<Ciphertext> {
        (0..w).map(|i| sk.encrypt_bit((v >> i) & 1 == 1, rng)).collect()
    }

    fn enc_str(sk: &SecretKey, s: &str, chars: usize, rng: &mut ChaCha20Rng) -> Vec<Ciphertext> {
        let mut b = s.as_bytes().to_vec();
        b.resize(chars, 0);
        bytes_to_bits(&b).iter().map(|&x| sk.encrypt_bit(x, rng)).collect()
    }

    fn pattern(sk: &SecretKey, p: &str, rng: &mut ChaCha20Rng) -> EncryptedPattern {
        let (mask, lits) = PatternMask::parse(p).unwrap();
        EncryptedPattern {
            mask,
            literal_bits: EncryptedWord::encrypt_bits(&bytes_to_bits(&lits), sk, rng),
        }
    }

    #[test]
    fn eq_hand_cases() {
        let (sk, mut rng) = setup();
        let ev = Evaluator::new();
        let two = enc(&sk, 2, 2, &mut rng);
        let three = enc(&sk, 3, 2, &mut rng);
        let two_b = enc(&sk, 2, 2, &mut rng);
        assert!(sk.decrypt(&eq_index(&ev, &two, &two_b).unwrap()).unwrap());
        assert!(!sk.decrypt(&eq_index(&ev, &two, &three).unwrap()).unwrap());
        assert!(matches!(
            eq_index(&ev, &two, &enc(&sk, 2, 3, &mut rng)),
            Err(CircuitError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn comparators_exhaustive_at_four_bits() {
        let (sk, mut rng) = setup();
        let ev = Evaluator::new();
        let words: Vec<_> = (0..16).map(|v| enc(&sk, v, 4, &mut rng)).collect();
        for a in 0..16u64 {
            for b in 0..16u64 {
                let (x, y) = (&words[a as usize], &words[b as usize]);
                assert_eq!(sk.decrypt(&eq_index(&ev, x, y).unwrap()).unwrap(), a == b);
                assert_eq!(sk.decrypt(&lt_index(&ev, x, y).unwrap()).unwrap(), a < b, "{a}<{b}");
                assert_eq!(sk.decrypt(&gt_index(&ev, x, y).unwrap()).unwrap(), a > b);
            }
        }
    }

    #[test]
    fn string_comparison_is_lexicographic() {
        let (sk, mut rng) = setup();
        let ev = Evaluator::new();
        let order = significance_order(ColumnKind::Str, 24);
        let words = ["", "A", "AB", "B", "Ba", "b"];
        for x in words {
            for y in words {
                let pick = |s: &str, rng: &mut ChaCha20Rng| -> Vec<Ciphertext> {
                    let w = enc_str(&sk, s, 3, rng);
                    order.iter().map(|&i| w[i].clone()).collect()
                };
                let a = pick(x, &mut rng);
                let b = pick(y, &mut rng);
                assert_eq!(sk.decrypt(&lt_index(&ev, &a, &b).unwrap()).unwrap(), x < y, "{x:?} < {y:?}");
            }
        }
    }

    #[test]
    fn pattern_cases() {
        let (sk, mut rng) = setup();
        let ev = Evaluator::new();
        let bob = enc_str(&sk, "Bob", 4, &mut rng);
        let ben = enc_str(&sk, "Ben", 4, &mut rng);
        let check = |p: &str, w: &[Ciphertext], rng: &mut ChaCha20Rng| {
            sk.decrypt(&pattern_index(&ev, w, &pattern(&sk, p, rng)).unwrap())
                .unwrap()
        };
        assert!(check("B?b", &bob, &mut rng));
        assert!(check("Bo*", &bob, &mut rng));
        assert!(!check("Bo*", &ben, &mut rng));
        assert!(check("???", &ben, &mut rng));
        assert!(check("B*", &ben, &mut rng));
        assert!(!check("B?", &ben, &mut rng));
        assert!(check("????", &ben, &mut rng));
        assert!(matches!(
            pattern_index(&ev, &bob, &pattern(&sk, "Bobby", &mut rng)),
            Err(CircuitError::PatternTooLong { .. })
        ));
    }

    #[test]
    fn pattern_oracle_agrees() {
        let (mask, lits) = PatternMask::parse("B?b").unwrap();
        assert!(mask.matches(&lits, b"Bob\0"));
        assert!(!mask.matches(&lits, b"Bobs"));
        let (mask, lits) = PatternMask::parse("Bo*").unwrap();
        assert!(mask.matches(&lits, b"Bobs"));
        assert!(!mask.matches(&lits, b"Ben\0"));
        assert!(PatternMask::parse("a*b").is_err());
    }
}
