use super::squash::{check_capacity, squash_vector};
use super::{add, mul, BootstrapKey, Ciphertext, HeError, PublicKey, SecurityParams};

/// Refreshes a ciphertext by evaluating the squashed decryption circuit
/// `LSB(c) xor LSB(round(sum s_i z_i))` over the encrypted subset bits.
///
/// The bits of `c` and `z` enter the circuit as trivial ciphertexts, so the
/// structure of the circuit, and therefore the output noise estimate, depends
/// on the parameters alone.
pub fn recrypt(
    ct: &Ciphertext,
    bk: Option<&BootstrapKey>,
    pk: &PublicKey,
) -> Result<Ciphertext, HeError> {
    let params = pk.params();
    if ct.exceeds_budget(params) {
        return Err(HeError::NoiseOverflow {
            noise_bits: ct.noise_bits(),
            limit: params.noise_limit(),
        });
    }
    let bk = bk.ok_or(HeError::BootstrapUnavailable)?;
    if bk.enc_s().len() != params.beta() as usize {
        return Err(HeError::InvalidParams(format!(
            "bootstrap key holds {} bits, expected {}",
            bk.enc_s().len(),
            params.beta()
        )));
    }
    let (c_lsb, z) = match ct.z() {
        Some(z) => {
            check_capacity(ct, params)?;
            (ct.value().bit(0), z.to_vec())
        }
        None => {
            let r = pk.reduce(ct);
            check_capacity(&r, params)?;
            (r.value().bit(0), squash_vector(r.value(), pk.y(), params))
        }
    };
    Ok(decryption_circuit(c_lsb, &z, bk.enc_s(), params.frac_bits()))
}

/// Noise estimate of every ciphertext [`recrypt`] returns under `params`.
pub fn recrypt_noise_bits(params: &SecurityParams) -> u64 {
    let enc_s = vec![Ciphertext::phantom(u64::from(params.n_bits())); params.beta() as usize];
    let z = vec![0; params.beta() as usize];
    decryption_circuit(false, &z, &enc_s, params.frac_bits()).noise_bits()
}

fn decryption_circuit(c_lsb: bool, z: &[u64], enc_s: &[Ciphertext], frac_bits: u32) -> Ciphertext {
    let width = frac_bits as usize + 1;
    // Fixed-point summands s_i * z_i, bit j has weight 2^(j - frac_bits).
    let mut layer: Vec<Vec<Ciphertext>> = z
        .iter()
        .zip(enc_s)
        .map(|(&zi, si)| {
            (0..width)
                .map(|j| mul(&Ciphertext::trivial((zi >> j) & 1 == 1), si))
                .collect()
        })
        .collect();
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        let mut it = layer.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(ripple_add(&a, &b)),
                None => next.push(a),
            }
        }
        layer = next;
    }
    let sum = layer.pop().expect("beta >= 2");
    // round(x) mod 2 = integer bit xor first fractional bit
    let int_bit = &sum[width - 1];
    let half_bit = &sum[width - 2];
    add(&add(&Ciphertext::trivial(c_lsb), int_bit), half_bit)
}

/// Sum of two equal-width little-endian words modulo 2^width.
fn ripple_add(a: &[Ciphertext], b: &[Ciphertext]) -> Vec<Ciphertext> {
    let mut out = Vec::with_capacity(a.len());
    let mut carry: Option<Ciphertext> = None;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        let last = j + 1 == a.len();
        let t = add(x, y);
        match carry.take() {
            None => {
                if !last {
                    carry = Some(mul(x, y));
                }
                out.push(t);
            }
            Some(c) => {
                if !last {
                    carry = Some(add(&mul(x, y), &mul(&c, &t)));
                }
                out.push(add(&t, &c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, seeded_rng, BitEncryptor, SecretKey};
    use rand::Rng;

    fn setup(seed: u64) -> (SecretKey, PublicKey, BootstrapKey) {
        let params = SecurityParams::bootstrappable(2).unwrap();
        keygen(&params, &mut seeded_rng(seed)).unwrap()
    }

    #[test]
    fn preserves_plaintext() {
        let (sk, pk, bk) = setup(1);
        let mut rng = seeded_rng(2);
        for _ in 0..20 {
            let m: bool = rng.gen();
            let ct = sk.encrypt_bit(m, &mut rng);
            let fresh = recrypt(&ct, Some(&bk), &pk).unwrap();
            assert_eq!(sk.decrypt(&fresh).unwrap(), m);
            let again = recrypt(&fresh, Some(&bk), &pk).unwrap();
            assert_eq!(sk.decrypt(&again).unwrap(), m);
        }
    }

    #[test]
    fn output_noise_is_constant() {
        let (sk, pk, bk) = setup(3);
        let expected = recrypt_noise_bits(pk.params());
        let mut rng = seeded_rng(4);
        let a = sk.encrypt_bit(true, &mut rng);
        let b = sk.encrypt_bit(true, &mut rng);
        for ct in [a.clone(), mul(&a, &b), add(&a, &b)] {
            assert_eq!(recrypt(&ct, Some(&bk), &pk).unwrap().noise_bits(), expected);
        }
    }

    #[test]
    fn missing_bootstrap_key() {
        let (sk, pk, _) = setup(5);
        let ct = sk.encrypt_bit(true, &mut seeded_rng(6));
        assert!(matches!(recrypt(&ct, None, &pk), Err(HeError::BootstrapUnavailable)));
    }

    #[test]
    fn rejects_undecryptable_input() {
        let (_, pk, bk) = setup(7);
        let ct = Ciphertext::phantom(pk.params().noise_limit());
        assert!(matches!(
            recrypt(&ct, Some(&bk), &pk),
            Err(HeError::NoiseOverflow { .. })
        ));
    }

    #[test]
    fn ripple_add_truth_table() {
        let (sk, _, _) = setup(8);
        let mut rng = seeded_rng(9);
        for a in 0u32..8 {
            for b in 0u32..8 {
                let enc = |v: u32, rng: &mut rand_chacha::ChaCha20Rng| -> Vec<Ciphertext> {
                    (0..3).map(|j| sk.encrypt_bit((v >> j) & 1 == 1, rng)).collect()
                };
                let s = ripple_add(&enc(a, &mut rng), &enc(b, &mut rng));
                let got: u32 = s
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (sk.decrypt(c).unwrap() as u32) << j)
                    .sum();
                assert_eq!(got, (a + b) % 8);
            }
        }
    }
}
