use super::HeError;

/// Largest supported security parameter. `q_bits = lambda^5` gets unwieldy fast.
pub const MAX_LAMBDA: u32 = 12;

/// Parameter set of the integer scheme.
///
/// The base shape follows `N = lambda`, `P = lambda^2`, `Q = lambda^5`. Toy
/// deployments that must evaluate deep query circuits without bootstrapping
/// enlarge the secret modulus with [`SecurityParams::with_p_bits`]; the noise
/// and multiplier sizes always keep the base shape.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SecurityParams {
    lambda: u32,
    n_bits: u32,
    p_bits: u32,
    q_bits: u32,
    alpha: u32,
    beta: u32,
    frac_bits: u32,
}

impl SecurityParams {
    /// Base parameter shape for `lambda`.
    pub fn new(lambda: u32) -> Result<Self, HeError> {
        Self::with_p_bits(lambda, lambda.saturating_mul(lambda))
    }

    /// Same as [`SecurityParams::new`] but with a larger secret modulus.
    pub fn with_p_bits(lambda: u32, p_bits: u32) -> Result<Self, HeError> {
        if lambda < 2 {
            return Err(HeError::InvalidParams(format!(
                "lambda must be at least 2 (got {lambda})"
            )));
        }
        if lambda > MAX_LAMBDA {
            return Err(HeError::InvalidParams(format!(
                "lambda must be at most {MAX_LAMBDA} (got {lambda})"
            )));
        }
        if p_bits < lambda * lambda {
            return Err(HeError::InvalidParams(format!(
                "p_bits {p_bits} is below lambda^2 = {}",
                lambda * lambda
            )));
        }
        let alpha = lambda;
        let beta = 5 * lambda;
        let frac_bits = ceil_log2(alpha as u64) + 3;
        let params = SecurityParams {
            lambda,
            n_bits: lambda,
            p_bits,
            q_bits: lambda.pow(5),
            alpha,
            beta,
            frac_bits,
        };
        params.check()?;
        Ok(params)
    }

    /// Parameters whose modulus leaves room for one multiplication of two
    /// freshly recrypted ciphertexts, so the evaluator can bootstrap forever.
    pub fn bootstrappable(lambda: u32) -> Result<Self, HeError> {
        let base = Self::new(lambda)?;
        let refreshed = super::recrypt::recrypt_noise_bits(&base);
        let p_bits = (2 * refreshed + 4).max(u64::from(lambda * lambda));
        Self::with_p_bits(lambda, to_u32(p_bits)?)
    }

    fn check(&self) -> Result<(), HeError> {
        if self.alpha < 1 || self.alpha >= self.beta {
            return Err(HeError::InvalidParams("need 1 <= alpha < beta".into()));
        }
        if self.frac_bits < ceil_log2(self.alpha as u64) + 3 {
            return Err(HeError::InvalidParams(
                "frac_bits must be at least ceil(log2(alpha)) + 3".into(),
            ));
        }
        if self.frac_bits + 1 > 63 {
            return Err(HeError::InvalidParams("frac_bits too large".into()));
        }
        Ok(())
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn p_bits(&self) -> u32 {
        self.p_bits
    }

    pub fn q_bits(&self) -> u32 {
        self.q_bits
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Ciphertexts are decryptable while `noise_bits < noise_limit()`.
    pub fn noise_limit(&self) -> u64 {
        u64::from(self.p_bits) - 1
    }

    /// Noise estimate of a fresh public-key encryption: `m'` plus up to
    /// `2 * beta` encryptions of zero.
    pub fn public_noise_bits(&self) -> u64 {
        u64::from(self.n_bits) + u64::from(ceil_log2(2 * self.beta as u64 + 1))
    }

    /// Bit length bound of the public reduction modulus `x0 = p * q0`.
    pub fn reduced_bits(&self) -> u64 {
        u64::from(self.p_bits) + u64::from(self.q_bits)
    }

    /// Fractional precision of the squash vector `y`. It must exceed the bit
    /// length of every ciphertext integer that will be squashed; ciphertexts
    /// are reduced modulo `x0` first, so it is sized for `x0`.
    pub fn y_frac_bits(&self) -> u64 {
        self.reduced_bits() + u64::from(self.frac_bits) + 8
    }

    /// Largest `c` bit length the squashed decryption handles exactly.
    pub fn squash_capacity(&self) -> u64 {
        self.y_frac_bits() - u64::from(self.frac_bits) - 6
    }
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

fn to_u32(v: u64) -> Result<u32, HeError> {
    u32::try_from(v).map_err(|_| HeError::InvalidParams(format!("{v} does not fit in 32 bits")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_shape_at_lambda_two() {
        let p = SecurityParams::new(2).unwrap();
        assert_eq!((p.n_bits(), p.p_bits(), p.q_bits()), (2, 4, 32));
        assert_eq!((p.alpha(), p.beta(), p.frac_bits()), (2, 10, 4));
    }

    #[test]
    fn rejects_degenerate_lambda() {
        assert!(matches!(SecurityParams::new(1), Err(HeError::InvalidParams(_))));
        assert!(matches!(SecurityParams::new(0), Err(HeError::InvalidParams(_))));
    }

    #[test]
    fn rejects_modulus_below_base_shape() {
        assert!(SecurityParams::with_p_bits(3, 8).is_err());
        assert!(SecurityParams::with_p_bits(3, 9).is_ok());
    }

    #[test]
    fn frac_bits_follow_alpha() {
        for lambda in 2..=6 {
            let p = SecurityParams::new(lambda).unwrap();
            assert_eq!(p.frac_bits(), ceil_log2(lambda as u64) + 3);
        }
    }

    #[test]
    fn ceil_log2_small_values() {
        let got: Vec<u32> = (1..=9).map(ceil_log2).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn bootstrappable_leaves_room_for_one_product() {
        let p = SecurityParams::bootstrappable(2).unwrap();
        let r = super::super::recrypt::recrypt_noise_bits(&p);
        assert!(2 * r < p.noise_limit());
    }
}
