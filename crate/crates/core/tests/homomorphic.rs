use std::sync::Arc;

use hedb_core::circuits::{multiply_words, prefix_sums, Evaluator};
use hedb_core::circuits::noise::{plan_params, Workload};
use hedb_core::he::{add, keygen, mul, recrypt, recrypt_noise_bits, seeded_rng, BitEncryptor, SecurityParams};
use proptest::prelude::*;

fn bits(v: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| (v >> i) & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gates_are_xor_and_and(seed in any::<u64>(), a in any::<bool>(), b in any::<bool>(), public in any::<bool>()) {
        let params = plan_params(2, &Workload::default()).unwrap();
        let mut rng = seeded_rng(seed);
        let (sk, pk, _) = keygen(&params, &mut rng).unwrap();
        let enc: &dyn BitEncryptor = if public { &pk } else { &sk };
        let (ca, cb) = (enc.encrypt_bit(a, &mut rng), enc.encrypt_bit(b, &mut rng));
        prop_assert_eq!(sk.decrypt(&add(&ca, &cb)), Ok(a ^ b));
        prop_assert_eq!(sk.decrypt(&mul(&ca, &cb)), Ok(a & b));
        prop_assert_eq!(sk.decrypt(&pk.add(&ca, &cb)), Ok(a ^ b));
        prop_assert_eq!(sk.decrypt(&pk.mul(&ca, &cb)), Ok(a & b));
    }

    #[test]
    fn noise_estimate_bounds_true_noise(seed in any::<u64>(), ops in proptest::collection::vec(any::<bool>(), 1..6)) {
        let params = plan_params(2, &Workload::default()).unwrap();
        let mut rng = seeded_rng(seed);
        let (sk, _, _) = keygen(&params, &mut rng).unwrap();
        let mut ct = sk.encrypt_bit(true, &mut rng);
        for is_mul in ops {
            let other = sk.encrypt_bit(true, &mut rng);
            ct = if is_mul { mul(&ct, &other) } else { add(&ct, &other) };
            prop_assume!(!ct.exceeds_budget(&params));
            prop_assert!(sk.noise_of(&ct) <= ct.noise_bits());
        }
    }

    #[test]
    fn words_multiply(seed in any::<u64>(), a in 0u64..16, b in 0u64..16) {
        let params = SecurityParams::bootstrappable(2).unwrap();
        let mut rng = seeded_rng(seed);
        let (sk, pk, bk) = keygen(&params, &mut rng).unwrap();
        let ev = Evaluator::new().with_bootstrap(Arc::new(pk.clone()), Arc::new(bk)).unwrap();
        let mut enc = |v: u64| bits(v, 4).into_iter().map(|x| pk.encrypt_bit(x, &mut rng)).collect::<Vec<_>>();
        let (ca, cb) = (enc(a), enc(b));
        let product = multiply_words(&ev, &ca, &cb).unwrap();
        let got = product.iter().enumerate().fold(0u64, |acc, (i, c)| acc | (u64::from(sk.decrypt(c).unwrap()) << i));
        prop_assert_eq!(got, a * b);
    }
}

#[test]
fn recrypt_refreshes_to_fixed_noise() {
    let params = SecurityParams::bootstrappable(2).unwrap();
    let mut rng = seeded_rng(5);
    let (sk, pk, bk) = keygen(&params, &mut rng).unwrap();
    for m in [false, true] {
        let mut ct = pk.encrypt_bit(m, &mut rng);
        while pk.mul(&ct, &pk.encrypt_bit(true, &mut rng)).noise_bits() < params.noise_limit() {
            ct = pk.mul(&ct, &pk.encrypt_bit(true, &mut rng));
        }
        let fresh = recrypt(&ct, Some(&bk), &pk).unwrap();
        assert_eq!(sk.decrypt(&fresh), Ok(m));
        assert_eq!(fresh.noise_bits(), recrypt_noise_bits(&params));
        assert!(fresh.noise_bits() < ct.noise_bits());
    }
}

#[test]
fn prefix_sums_count_matches_so_far() {
    let params = plan_params(2, &Workload::default()).unwrap();
    let mut rng = seeded_rng(9);
    let (sk, pk, _) = keygen(&params, &mut rng).unwrap();
    let pattern = [true, false, true, true, false, false, true];
    let idx: Vec<_> = pattern.iter().map(|&b| pk.encrypt_bit(b, &mut rng)).collect();
    let ev = Evaluator::new().with_reduction(pk.x0().clone());
    let sums = prefix_sums(&ev, &idx, 3);
    let mut running = 0;
    for (hit, s) in pattern.iter().zip(&sums) {
        running += u64::from(*hit);
        let got = s.bits().iter().enumerate().fold(0, |acc, (i, c)| acc | (u64::from(sk.decrypt(c).unwrap()) << i));
        assert_eq!(got, running);
    }
}
