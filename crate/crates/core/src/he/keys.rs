use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::One;
use rand::seq::index;
use rand::{Rng, RngCore};

use super::squash::{self, squash_postprocess};
use super::{Ciphertext, HeError, SecurityParams};

/// The secret odd modulus together with the secret sparse subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    p: BigUint,
    params: SecurityParams,
    hint: SquashHint,
}

/// `y` holds `beta` fixed-point numbers in `[0, 2)` with
/// [`SecurityParams::y_frac_bits`] fractional bits, stored as integers
/// `Y_i = y_i * 2^y_frac_bits`. The entries selected by `s` sum to `1/p`
/// modulo 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquashHint {
    pub(crate) y: Vec<BigUint>,
    pub(crate) s: Vec<bool>,
}

/// Public material: the reduction modulus `x0 = p * q0`, the encryptions of
/// zero for public-mode encryption and the squash vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    params: SecurityParams,
    x0: BigUint,
    zero_encs: Vec<BigUint>,
    y: Vec<BigUint>,
}

/// The secret subset bits, each encrypted under the same key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BootstrapKey {
    enc_s: Vec<Ciphertext>,
}

/// Anything that can encrypt a single bit.
pub trait BitEncryptor: Sync {
    fn params(&self) -> &SecurityParams;
    fn encrypt_bit(&self, m: bool, rng: &mut dyn RngCore) -> Ciphertext;
}

/// Generates a fresh key set.
pub fn keygen(
    params: &SecurityParams,
    rng: &mut dyn RngCore,
) -> Result<(SecretKey, PublicKey, BootstrapKey), HeError> {
    let p = random_modulus(params.p_bits(), rng);
    let sk = SecretKey::with_modulus(p, params.clone(), rng)?;
    let pk = sk.derive_public_key(rng);
    let bk = sk.derive_bootstrap_key(rng);
    Ok((sk, pk, bk))
}

/// A random `bits`-bit odd number with its top two bits set. Keeping `p` in
/// the upper quarter of the range leaves the squashed decryption a rounding
/// margin for every ciphertext the noise estimate accepts.
fn random_modulus(bits: u32, rng: &mut dyn RngCore) -> BigUint {
    let bits = u64::from(bits);
    let low = rng.gen_biguint(bits - 2);
    let top = BigUint::from(3u8) << (bits - 2);
    (top | low) | BigUint::one()
}

impl SecretKey {
    /// Builds a key around a given modulus, generating a fresh squash hint.
    pub fn with_modulus(
        p: BigUint,
        params: SecurityParams,
        rng: &mut dyn RngCore,
    ) -> Result<Self, HeError> {
        if p.is_even() || p < BigUint::from(3u8) {
            return Err(HeError::InvalidParams("secret modulus must be odd and >= 3".into()));
        }
        if p.bits() != u64::from(params.p_bits()) {
            return Err(HeError::InvalidParams(format!(
                "secret modulus has {} bits, expected {}",
                p.bits(),
                params.p_bits()
            )));
        }
        let hint = SquashHint::generate(&p, &params, rng);
        Ok(SecretKey { p, params, hint })
    }

    pub(crate) fn from_parts(p: BigUint, params: SecurityParams, hint: SquashHint) -> Self {
        SecretKey { p, params, hint }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn params(&self) -> &SecurityParams {
        &self.params
    }

    pub fn hint(&self) -> &SquashHint {
        &self.hint
    }

    pub fn derive_public_key(&self, rng: &mut dyn RngCore) -> PublicKey {
        let zero_encs = (0..2 * self.params.beta())
            .map(|_| self.encrypt_bit(false, rng).into_value())
            .collect();
        let q0 = random_exact_bits(self.params.q_bits(), rng);
        PublicKey {
            params: self.params.clone(),
            x0: &self.p * q0,
            zero_encs,
            y: self.hint.y.clone(),
        }
    }

    pub fn derive_bootstrap_key(&self, rng: &mut dyn RngCore) -> BootstrapKey {
        let enc_s = self.hint.s.iter().map(|&b| self.encrypt_bit(b, rng)).collect();
        BootstrapKey { enc_s }
    }

    /// `c = m' + p*q` with caller-chosen noise and multiplier.
    pub fn encrypt_with(&self, m_prime: &BigUint, q: &BigUint) -> Ciphertext {
        let noise_bits = m_prime.bits().max(u64::from(self.params.n_bits()));
        Ciphertext::from_parts(m_prime + &self.p * q, None, noise_bits)
    }

    /// The noise residue of `c`, centred into `(-p/2, p/2]`.
    pub fn centered_residue(&self, ct: &Ciphertext) -> BigInt {
        centered(ct.value(), &self.p)
    }

    /// Decrypts without consulting the noise estimate.
    pub fn decrypt_unchecked(&self, ct: &Ciphertext) -> bool {
        self.centered_residue(ct).is_odd()
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Result<bool, HeError> {
        self.check_budget(ct)?;
        Ok(self.decrypt_unchecked(ct))
    }

    /// Decryption through the squash vector: `LSB(c) xor LSB(round(sum s_i z_i))`.
    pub fn decrypt_squashed(&self, ct: &Ciphertext) -> Result<bool, HeError> {
        self.check_budget(ct)?;
        squash::check_capacity(ct, &self.params)?;
        let z = ct.z().ok_or(HeError::SquashMissing)?;
        let sum: u64 = z
            .iter()
            .zip(&self.hint.s)
            .filter(|(_, &s)| s)
            .map(|(&zi, _)| zi)
            .sum();
        let f = self.params.frac_bits();
        let rounded = (sum + (1 << (f - 1))) >> f;
        let c_lsb = ct.value().bit(0);
        Ok(c_lsb ^ (rounded & 1 == 1))
    }

    /// Bit length of the true noise. Test and debugging aid only.
    pub fn noise_of(&self, ct: &Ciphertext) -> u64 {
        self.centered_residue(ct).bits()
    }

    fn check_budget(&self, ct: &Ciphertext) -> Result<(), HeError> {
        if ct.exceeds_budget(&self.params) {
            return Err(HeError::NoiseOverflow {
                noise_bits: ct.noise_bits(),
                limit: self.params.noise_limit(),
            });
        }
        Ok(())
    }
}

impl BitEncryptor for SecretKey {
    fn params(&self) -> &SecurityParams {
        &self.params
    }

    /// Symmetric mode: `m'` a random `N`-bit number with the parity of `m`,
    /// `q` a random `Q`-bit number.
    fn encrypt_bit(&self, m: bool, rng: &mut dyn RngCore) -> Ciphertext {
        let m_prime = random_noise(self.params.n_bits(), m, rng);
        let q = random_exact_bits(self.params.q_bits(), rng);
        self.encrypt_with(&m_prime, &q)
    }
}

impl SquashHint {
    fn generate(p: &BigUint, params: &SecurityParams, rng: &mut dyn RngCore) -> Self {
        let beta = params.beta() as usize;
        let alpha = params.alpha() as usize;
        let kappa = params.y_frac_bits();
        let modulus = BigUint::one() << (kappa + 1);

        let mut y: Vec<BigUint> = (0..beta).map(|_| rng.gen_biguint_below(&modulus)).collect();
        let subset = index::sample(rng, beta, alpha).into_vec();
        let mut s = vec![false; beta];
        for &i in &subset {
            s[i] = true;
        }
        let last = subset[rng.gen_range(0..alpha)];

        // round(2^kappa / p)
        let target = ((BigUint::one() << (kappa + 1)) + p) / (p << 1u32);
        let others: BigUint = subset.iter().filter(|&&i| i != last).map(|&i| &y[i]).sum();
        let others = others % &modulus;
        y[last] = (target + &modulus - others) % &modulus;
        SquashHint { y, s }
    }

    pub fn y(&self) -> &[BigUint] {
        &self.y
    }

    pub fn s(&self) -> &[bool] {
        &self.s
    }
}

impl PublicKey {
    pub(crate) fn from_parts(
        params: SecurityParams,
        x0: BigUint,
        zero_encs: Vec<BigUint>,
        y: Vec<BigUint>,
    ) -> Self {
        PublicKey {
            params,
            x0,
            zero_encs,
            y,
        }
    }

    /// Public multiple of the secret modulus used to keep ciphertexts short.
    pub fn x0(&self) -> &BigUint {
        &self.x0
    }

    pub fn reduce(&self, ct: &Ciphertext) -> Ciphertext {
        ct.reduced(&self.x0)
    }

    pub fn params(&self) -> &SecurityParams {
        &self.params
    }

    pub fn zero_encs(&self) -> &[BigUint] {
        &self.zero_encs
    }

    pub fn y(&self) -> &[BigUint] {
        &self.y
    }

    /// Reduces `ct` modulo `x0` and attaches its squash vector.
    pub fn squash(&self, ct: &Ciphertext) -> Ciphertext {
        squash_postprocess(&self.reduce(ct), &self.y, &self.params)
    }

    /// Reduced addition that keeps the squash vector populated when an input
    /// had one.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.resquash(self.reduce(&super::add(a, b)), a, b)
    }

    /// Reduced multiplication that keeps the squash vector populated when an
    /// input had one.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.resquash(self.reduce(&super::mul(a, b)), a, b)
    }

    fn resquash(&self, out: Ciphertext, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        if a.z().is_some() || b.z().is_some() {
            squash_postprocess(&out, &self.y, &self.params)
        } else {
            out
        }
    }
}

impl BitEncryptor for PublicKey {
    fn params(&self) -> &SecurityParams {
        &self.params
    }

    /// Public mode: `m'` plus the sum of a uniformly chosen subset of the
    /// encryptions of zero.
    fn encrypt_bit(&self, m: bool, rng: &mut dyn RngCore) -> Ciphertext {
        let mut c = random_noise(self.params.n_bits(), m, rng);
        for z in &self.zero_encs {
            if rng.gen::<bool>() {
                c += z;
            }
        }
        Ciphertext::from_parts(c % &self.x0, None, self.params.public_noise_bits())
    }
}

impl BootstrapKey {
    pub fn from_ciphertexts(enc_s: Vec<Ciphertext>) -> Self {
        BootstrapKey { enc_s }
    }

    pub fn enc_s(&self) -> &[Ciphertext] {
        &self.enc_s
    }
}

/// A random `bits`-bit number (top bit set) whose parity is `m`.
fn random_noise(bits: u32, m: bool, rng: &mut dyn RngCore) -> BigUint {
    let mut v = random_exact_bits(bits, rng);
    v.set_bit(0, m);
    v
}

fn random_exact_bits(bits: u32, rng: &mut dyn RngCore) -> BigUint {
    let bits = u64::from(bits);
    let mut v = rng.gen_biguint(bits);
    v.set_bit(bits - 1, true);
    v
}

fn centered(c: &BigUint, p: &BigUint) -> BigInt {
    let r = c % p;
    if (&r << 1u32) > *p {
        BigInt::from_biguint(Sign::Plus, r) - BigInt::from_biguint(Sign::Plus, p.clone())
    } else {
        BigInt::from_biguint(Sign::Plus, r)
    }
}
