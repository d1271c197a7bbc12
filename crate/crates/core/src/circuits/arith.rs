use rayon::prelude::*;

use crate::data::EncryptedWord;
use crate::he::Ciphertext;

use super::{CircuitError, Evaluator, Fault};

/// Encrypted unsigned counter, least significant bit first.
pub type EncryptedCounter = EncryptedWord;

/// Bits needed to count up to `rows`: `ceil(log2(rows + 1))`, at least one.
pub fn counter_width(rows: usize) -> usize {
    (usize::BITS - rows.leading_zeros()).max(1) as usize
}

/// Adds one encrypted bit to a counter. Per stage `sum = a xor cin` and
/// `carry = a * cin`, seeded with `cin = bit`; the final carry is dropped.
pub fn encrypted_add(ev: &Evaluator, acc: &[Ciphertext], bit: &Ciphertext) -> Vec<Ciphertext> {
    let mut out = Vec::with_capacity(acc.len());
    let mut carry = bit.clone();
    for (i, a) in acc.iter().enumerate() {
        if ev.faulty(Fault::IncrementAnd) {
            out.push(ev.mul(a, &carry));
        } else {
            out.push(ev.add(a, &carry));
        }
        if i + 1 < acc.len() {
            carry = ev.mul(a, &carry);
        }
    }
    out
}

/// Inclusive prefix sums `S_R = sum_{i <= R} I_i`, each `width` bits wide.
///
/// A Hillis-Steele scan: after the stage with stride `d`, entry `R` holds
/// the sum of the `2d` bits ending at `R`. The `ceil(log2 rows)` stages are
/// sequential; the ripple additions inside a stage run in parallel.
pub fn prefix_sums(ev: &Evaluator, idx: &[Ciphertext], width: usize) -> Vec<EncryptedCounter> {
    let mut cur: Vec<Vec<Ciphertext>> = idx
        .iter()
        .map(|bit| {
            let mut w = vec![bit.clone()];
            w.resize_with(width.max(1), || ev.zero());
            w
        })
        .collect();
    let mut d = 1;
    while d < cur.len() {
        let prev = &cur;
        let next: Vec<Vec<Ciphertext>> = (0..prev.len())
            .into_par_iter()
            .map(|r| {
                if r < d {
                    prev[r].clone()
                } else {
                    ripple_add(ev, &prev[r], &prev[r - d]).expect("equal widths")
                }
            })
            .collect();
        cur = next;
        d *= 2;
    }
    cur.into_iter().map(EncryptedWord::new).collect()
}

/// Sum of two equal-width words modulo `2^width`.
pub fn ripple_add(ev: &Evaluator, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Vec<Ciphertext>, CircuitError> {
    if a.len() != b.len() {
        return Err(CircuitError::WidthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut out = Vec::with_capacity(a.len());
    let mut carry: Option<Ciphertext> = None;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        let last = j + 1 == a.len();
        let t = ev.add(x, y);
        match carry.take() {
            None => {
                if !last {
                    carry = Some(ev.mul(x, y));
                }
                out.push(t);
            }
            Some(c) => {
                if !last {
                    carry = Some(ev.add(&ev.mul(x, y), &ev.mul(&c, &t)));
                }
                out.push(ev.add(&t, &c));
            }
        }
    }
    Ok(out)
}

/// Schoolbook product of two `n`-bit words into `2n` bits: partial products
/// `a_j * b_i` accumulated with ripple-carry adders.
pub fn multiply_words(ev: &Evaluator, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Vec<Ciphertext>, CircuitError> {
    if a.len() != b.len() {
        return Err(CircuitError::WidthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    let mut acc: Vec<Ciphertext> = Vec::with_capacity(2 * n);
    for (i, bi) in b.iter().enumerate() {
        let partial: Vec<Ciphertext> = a.iter().map(|aj| ev.mul(aj, bi)).collect();
        if i == 0 {
            acc = partial;
            acc.push(ev.zero());
            continue;
        }
        // Bits below i are final; add the partial product into acc[i..].
        let mut high = acc.split_off(i);
        high.resize_with(n + 1, || ev.zero());
        let mut partial = partial;
        partial.push(ev.zero());
        acc.extend(ripple_add(ev, &high, &partial)?);
    }
    acc.resize_with(2 * n, || ev.zero());
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, seeded_rng, BitEncryptor, SecretKey, SecurityParams};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha20Rng;

    fn setup(p_bits: u32) -> (SecretKey, ChaCha20Rng) {
        let params = SecurityParams::with_p_bits(2, p_bits).unwrap();
        let mut rng = seeded_rng(3);
        (keygen(&params, &mut rng).unwrap().0, rng)
    }

    fn dec(sk: &SecretKey, w: &[Ciphertext]) -> u64 {
        w.iter()
            .enumerate()
            .map(|(i, c)| u64::from(sk.decrypt(c).unwrap()) << i)
            .sum()
    }

    fn enc(sk: &SecretKey, v: u64, w: usize, rng: &mut ChaCha20Rng) -> Vec<Ciphertext> {
        (0..w).map(|i| sk.encrypt_bit((v >> i) & 1 == 1, rng)).collect()
    }

    #[test]
    fn widths() {
        assert_eq!(counter_width(0), 1);
        assert_eq!(counter_width(1), 1);
        assert_eq!(counter_width(3), 2);
        assert_eq!(counter_width(4), 3);
        assert_eq!(counter_width(10), 4);
        assert_eq!(counter_width(16), 5);
    }

    #[test]
    fn increment_cases() {
        let (sk, mut rng) = setup(120);
        let ev = Evaluator::new();
        let one = sk.encrypt_bit(true, &mut rng);
        assert_eq!(dec(&sk, &encrypted_add(&ev, &enc(&sk, 0, 3, &mut rng), &one)), 1);
        assert_eq!(dec(&sk, &encrypted_add(&ev, &enc(&sk, 3, 3, &mut rng), &one)), 4);
        let zero = sk.encrypt_bit(false, &mut rng);
        assert_eq!(dec(&sk, &encrypted_add(&ev, &enc(&sk, 5, 3, &mut rng), &zero)), 5);
    }

    #[test]
    fn prefix_sums_by_hand() {
        let (sk, mut rng) = setup(400);
        let ev = Evaluator::new();
        let idx: Vec<_> = [false, true, false, true]
            .iter()
            .map(|&b| sk.encrypt_bit(b, &mut rng))
            .collect();
        let sums: Vec<u64> = prefix_sums(&ev, &idx, 3).iter().map(|s| dec(&sk, s.bits())).collect();
        assert_eq!(sums, vec![0, 1, 1, 2]);
    }

    #[test]
    fn popcount_oracle() {
        let (sk, mut rng) = setup(1200);
        let ev = Evaluator::new();
        for _ in 0..100 {
            let n = rng.gen_range(1..=15);
            let bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let idx: Vec<_> = bits.iter().map(|&b| sk.encrypt_bit(b, &mut rng)).collect();
            let sums = prefix_sums(&ev, &idx, counter_width(n));
            let mut running = 0;
            for (b, s) in bits.iter().zip(&sums) {
                running += u64::from(*b);
                assert_eq!(dec(&sk, s.bits()), running);
            }
        }
    }

    #[test]
    fn adder_exhaustive_three_bits() {
        let (sk, mut rng) = setup(120);
        let ev = Evaluator::new();
        for a in 0..8 {
            for b in 0..8 {
                let s = ripple_add(&ev, &enc(&sk, a, 3, &mut rng), &enc(&sk, b, 3, &mut rng)).unwrap();
                assert_eq!(dec(&sk, &s), (a + b) % 8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn product_matches_integer_product(a in 0u64..16, b in 0u64..16) {
            let (sk, mut rng) = setup(2000);
            let ev = Evaluator::new();
            let p = multiply_words(&ev, &enc(&sk, a, 4, &mut rng), &enc(&sk, b, 4, &mut rng)).unwrap();
            prop_assert_eq!(p.len(), 8);
            prop_assert_eq!(dec(&sk, &p), a * b);
        }
    }
}
