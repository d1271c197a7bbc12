use num_bigint::BigUint;
use num_traits::One;

use super::{Ciphertext, HeError, SecurityParams};

/// Computes `z_i = c * y_i mod 2`, truncated to `frac_bits` fractional bits.
///
/// Each `z_i` is returned as the integer `floor(z_i * 2^frac_bits)`, which is
/// below `2^(frac_bits + 1)`.
pub fn squash_postprocess(ct: &Ciphertext, y: &[BigUint], params: &SecurityParams) -> Ciphertext {
    let z = squash_vector(ct.value(), y, params);
    ct.clone().with_z(z)
}

pub(crate) fn squash_vector(c: &BigUint, y: &[BigUint], params: &SecurityParams) -> Vec<u64> {
    let kappa = params.y_frac_bits();
    let f = u64::from(params.frac_bits());
    let window = (BigUint::one() << (kappa + 1)) - 1u32;
    // Only c mod 2^(kappa+1) influences c * y_i mod 2.
    let c_low = c & &window;
    let z_mask = (1u64 << (f + 1)) - 1;
    y.iter()
        .map(|yi| {
            let prod = &c_low * yi;
            let shifted: BigUint = prod >> (kappa - f);
            let low = shifted.iter_u64_digits().next().unwrap_or(0);
            low & z_mask
        })
        .collect()
}

/// The squashed decryption is only exact while `c` is shorter than the
/// precision of `y`.
pub(crate) fn check_capacity(ct: &Ciphertext, params: &SecurityParams) -> Result<(), HeError> {
    let capacity = params.squash_capacity();
    if ct.value().bits() > capacity {
        return Err(HeError::SquashPrecision {
            c_bits: ct.value().bits(),
            capacity,
        });
    }
    Ok(())
}

/// Number of bytes used per `z_i` in the binary ciphertext format.
pub fn z_value_bytes(frac_bits: u32) -> usize {
    (frac_bits as usize + 1).div_ceil(8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, seeded_rng, BitEncryptor};
    use num_bigint::{BigInt, RandBigInt};
    use num_integer::Integer;
    use num_rational::BigRational;
    use num_traits::{ToPrimitive, Zero};
    use rand::Rng;

    fn params() -> SecurityParams {
        SecurityParams::new(3).unwrap()
    }

    /// Independent route: exact rational arithmetic.
    fn z_oracle(c: &BigUint, y: &BigUint, params: &SecurityParams) -> u64 {
        let kappa = params.y_frac_bits() as usize;
        let f = params.frac_bits() as usize;
        let x = BigRational::new(BigInt::from(c * y), BigInt::from(BigUint::one() << kappa));
        let two = BigRational::from_integer(BigInt::from(2));
        let reduced = &x - &two * (&x / &two).floor();
        let scaled = reduced * BigRational::from_integer(BigInt::from(BigUint::one() << f));
        scaled.floor().to_integer().to_u64().unwrap()
    }

    #[test]
    fn zero_y_gives_zero_z() {
        let p = params();
        let ct = Ciphertext::from_parts(BigUint::from(12345u32), None, 3);
        let z = squash_postprocess(&ct, &[BigUint::zero()], &p);
        assert_eq!(z.z().unwrap(), &[0]);
    }

    #[test]
    fn even_c_with_unit_y_gives_zero() {
        let p = params();
        let one = BigUint::one() << p.y_frac_bits();
        let ct = Ciphertext::from_parts(BigUint::from(1000u32), None, 3);
        assert_eq!(squash_postprocess(&ct, &[one.clone()], &p).z().unwrap(), &[0]);
        // odd c: c * 1 mod 2 = 1, which is 2^frac_bits in fixed point
        let ct = Ciphertext::from_parts(BigUint::from(1001u32), None, 3);
        assert_eq!(
            squash_postprocess(&ct, &[one], &p).z().unwrap(),
            &[1u64 << p.frac_bits()]
        );
    }

    #[test]
    fn recomputation_matches_rational_oracle() {
        let p = params();
        let mut rng = seeded_rng(4);
        let modulus = BigUint::one() << (p.y_frac_bits() + 1);
        for _ in 0..200 {
            let bits = rng.gen_range(1..p.squash_capacity());
            let c = rng.gen_biguint(bits);
            let y = rng.gen_biguint_below(&modulus);
            let got = squash_vector(&c, std::slice::from_ref(&y), &p);
            assert_eq!(got[0], z_oracle(&c, &y, &p));
            assert!(got[0] < 1 << (p.frac_bits() + 1));
        }
    }

    #[test]
    fn squashed_decryption_matches_direct_on_fresh_ciphertexts() {
        let p = params();
        let mut rng = seeded_rng(9);
        let (sk, pk, _) = keygen(&p, &mut rng).unwrap();
        for _ in 0..300 {
            let m: bool = rng.gen();
            let ct = pk.squash(&sk.encrypt_bit(m, &mut rng));
            assert_eq!(sk.decrypt_squashed(&ct).unwrap(), m);
            assert!(sk.modulus().is_odd());
        }
    }

    #[test]
    fn missing_squash_vector_is_reported() {
        let p = params();
        let mut rng = seeded_rng(10);
        let (sk, _, _) = keygen(&p, &mut rng).unwrap();
        let ct = sk.encrypt_bit(true, &mut rng);
        assert!(matches!(sk.decrypt_squashed(&ct), Err(HeError::SquashMissing)));
    }

    #[test]
    fn z_byte_width() {
        assert_eq!(z_value_bytes(4), 1);
        assert_eq!(z_value_bytes(7), 1);
        assert_eq!(z_value_bytes(8), 2);
    }
}
