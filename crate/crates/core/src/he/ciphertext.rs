use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::SecurityParams;

/// One encrypted bit.
///
/// `noise_bits` is a conservative bound on the bit length of the noise
/// `c mod p`; it is updated by every operation without access to the key.
/// `z` holds the squash post-processing when it has been computed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    c: BigUint,
    z: Option<Vec<u64>>,
    noise_bits: u64,
}

impl Ciphertext {
    pub fn from_parts(c: BigUint, z: Option<Vec<u64>>, noise_bits: u64) -> Self {
        Ciphertext { c, z, noise_bits }
    }

    /// Plaintext constant injected into a circuit. Both values carry a noise
    /// bound of one bit so that noise accounting never depends on the bit.
    pub fn trivial(bit: bool) -> Self {
        let c = if bit { BigUint::one() } else { BigUint::zero() };
        Ciphertext {
            c,
            z: None,
            noise_bits: 1,
        }
    }

    /// A zero-valued stand-in with the given noise bound. Running a circuit
    /// over these costs almost nothing and yields the exact noise estimates
    /// the real run would produce.
    pub fn phantom(noise_bits: u64) -> Self {
        Ciphertext {
            c: BigUint::zero(),
            z: None,
            noise_bits,
        }
    }

    pub fn value(&self) -> &BigUint {
        &self.c
    }

    pub fn z(&self) -> Option<&[u64]> {
        self.z.as_deref()
    }

    pub fn noise_bits(&self) -> u64 {
        self.noise_bits
    }

    /// True once the noise estimate no longer guarantees correct decryption.
    pub fn exceeds_budget(&self, params: &SecurityParams) -> bool {
        self.noise_bits >= params.noise_limit()
    }

    pub fn without_squash(mut self) -> Self {
        self.z = None;
        self
    }

    pub(crate) fn with_z(mut self, z: Vec<u64>) -> Self {
        self.z = Some(z);
        self
    }

    /// Reduces `c` modulo a public multiple of the secret modulus. The
    /// residue modulo `p`, and with it the plaintext and the noise, is kept.
    pub fn reduced(&self, x0: &BigUint) -> Ciphertext {
        Ciphertext {
            c: &self.c % x0,
            z: None,
            noise_bits: self.noise_bits,
        }
    }

    pub fn into_value(self) -> BigUint {
        self.c
    }
}

/// Homomorphic addition: XOR of the plaintext bits.
pub fn add(a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext {
        c: &a.c + &b.c,
        z: None,
        noise_bits: a.noise_bits.max(b.noise_bits) + 1,
    }
}

/// Homomorphic multiplication: AND of the plaintext bits.
pub fn mul(a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext {
        c: &a.c * &b.c,
        z: None,
        noise_bits: a.noise_bits + b.noise_bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_rules() {
        let a = Ciphertext::phantom(3);
        let b = Ciphertext::phantom(5);
        assert_eq!(add(&a, &b).noise_bits(), 6);
        assert_eq!(mul(&a, &b).noise_bits(), 8);
    }

    #[test]
    fn trivial_constants_share_a_noise_bound() {
        assert_eq!(Ciphertext::trivial(false).noise_bits(), 1);
        assert_eq!(Ciphertext::trivial(true).noise_bits(), 1);
        assert_eq!(Ciphertext::trivial(true).value(), &BigUint::one());
    }
}
