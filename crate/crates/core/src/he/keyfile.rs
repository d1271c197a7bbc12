//! Text formats for key material.
//!
//! The secret key file (`HEDB-KEY v1`) holds the modulus, the squash hint, the
//! reduction modulus `x0` and the encryptions of zero. The bootstrap file
//! (`HEDB-BSK v1`) holds only public material: `x0`, the squash vector `y` and
//! the encrypted subset bits.

use num_bigint::BigUint;
use num_traits::{Num, Zero};

use super::keys::SquashHint;
use super::{BootstrapKey, Ciphertext, HeError, PublicKey, SecretKey, SecurityParams};

const KEY_MAGIC: &str = "HEDB-KEY v1";
const BOOTSTRAP_MAGIC: &str = "HEDB-BSK v1";

pub fn write_key_file(sk: &SecretKey, pk: &PublicKey) -> String {
    let params = sk.params();
    let mut out = String::new();
    out.push_str(KEY_MAGIC);
    out.push('\n');
    out.push_str(&format!("{}\n", params.lambda()));
    out.push_str(&format!("{}\n", sk.modulus().to_str_radix(16)));
    out.push_str(&format!(
        "{} {} {}\n",
        params.beta(),
        params.alpha(),
        params.frac_bits()
    ));
    for y in sk.hint().y() {
        out.push_str(&y.to_str_radix(16));
        out.push('\n');
    }
    out.push_str(&subset_hex(sk.hint().s()));
    out.push('\n');
    out.push_str(&pk.x0().to_str_radix(16));
    out.push('\n');
    out.push_str(&format!("{}\n", pk.zero_encs().len()));
    for z in pk.zero_encs() {
        out.push_str(&z.to_str_radix(16));
        out.push('\n');
    }
    out
}

pub fn parse_key_file(text: &str) -> Result<(SecretKey, PublicKey), HeError> {
    let mut lines = Lines::new(text);
    lines.expect_magic(KEY_MAGIC)?;
    let lambda: u32 = lines.number("lambda")?;
    let p = lines.hex("modulus")?;
    let params = SecurityParams::with_p_bits(lambda, p.bits() as u32)?;
    lines.check_shape(&params)?;
    let y = lines.hex_list(params.beta() as usize, "squash vector")?;
    let s = parse_subset(lines.next("subset")?, &params)?;
    let x0 = lines.hex("reduction modulus")?;
    check_x0(&x0, &p)?;
    let count: usize = lines.number("zero count")?;
    let zero_encs = lines.hex_list(count, "encryption of zero")?;
    lines.expect_end()?;

    let hint = SquashHint { y: y.clone(), s };
    let sk = SecretKey::from_parts(p, params.clone(), hint);
    let pk = PublicKey::from_parts(params, x0, zero_encs, y);
    Ok((sk, pk))
}

pub fn write_bootstrap_file(pk: &PublicKey, bk: &BootstrapKey) -> String {
    let params = pk.params();
    let mut out = String::new();
    out.push_str(BOOTSTRAP_MAGIC);
    out.push('\n');
    out.push_str(&format!("{}\n{}\n", params.lambda(), params.p_bits()));
    out.push_str(&format!(
        "{} {} {}\n",
        params.beta(),
        params.alpha(),
        params.frac_bits()
    ));
    out.push_str(&pk.x0().to_str_radix(16));
    out.push('\n');
    for y in pk.y() {
        out.push_str(&y.to_str_radix(16));
        out.push('\n');
    }
    for ct in bk.enc_s() {
        out.push_str(&format!("{} {}\n", ct.noise_bits(), ct.value().to_str_radix(16)));
    }
    out
}

pub fn parse_bootstrap_file(text: &str) -> Result<(PublicKey, BootstrapKey), HeError> {
    let mut lines = Lines::new(text);
    lines.expect_magic(BOOTSTRAP_MAGIC)?;
    let lambda: u32 = lines.number("lambda")?;
    let p_bits: u32 = lines.number("p_bits")?;
    let params = SecurityParams::with_p_bits(lambda, p_bits)?;
    lines.check_shape(&params)?;
    let x0 = lines.hex("reduction modulus")?;
    if x0.bits() > params.reduced_bits() || x0.bits() < u64::from(params.p_bits()) {
        return Err(key_err("reduction modulus has the wrong size"));
    }
    let y = lines.hex_list(params.beta() as usize, "squash vector")?;
    let mut enc_s = Vec::with_capacity(params.beta() as usize);
    for _ in 0..params.beta() {
        let line = lines.next("encrypted subset bit")?;
        let (noise, value) = line
            .split_once(' ')
            .ok_or_else(|| lines.err("encrypted subset bit"))?;
        let noise: u64 = noise.parse().map_err(|_| lines.err("noise bound"))?;
        let value = BigUint::from_str_radix(value, 16).map_err(|_| lines.err("hex value"))?;
        enc_s.push(Ciphertext::from_parts(value, None, noise));
    }
    lines.expect_end()?;
    Ok((
        PublicKey::from_parts(params, x0, Vec::new(), y),
        BootstrapKey::from_ciphertexts(enc_s),
    ))
}

fn subset_hex(s: &[bool]) -> String {
    let mut v = BigUint::default();
    for (i, &b) in s.iter().enumerate() {
        v.set_bit(i as u64, b);
    }
    let digits = s.len().div_ceil(4);
    format!("{:0>width$}", v.to_str_radix(16), width = digits)
}

fn parse_subset(hex: &str, params: &SecurityParams) -> Result<Vec<bool>, HeError> {
    let v = BigUint::from_str_radix(hex, 16).map_err(|_| key_err("subset is not hex"))?;
    let beta = params.beta() as u64;
    if v.bits() > beta {
        return Err(key_err("subset has bits beyond beta"));
    }
    let s: Vec<bool> = (0..beta).map(|i| v.bit(i)).collect();
    if s.iter().filter(|&&b| b).count() != params.alpha() as usize {
        return Err(key_err("subset weight differs from alpha"));
    }
    Ok(s)
}

fn check_x0(x0: &BigUint, p: &BigUint) -> Result<(), HeError> {
    if x0.bits() == 0 || !(x0 % p).is_zero() {
        return Err(key_err("reduction modulus is not a multiple of the secret modulus"));
    }
    Ok(())
}

fn key_err(msg: &str) -> HeError {
    HeError::KeyFile(msg.to_string())
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines(),
            line_no: 0,
        }
    }

    fn err(&self, what: &str) -> HeError {
        HeError::KeyFile(format!("line {}: bad {what}", self.line_no))
    }

    fn next(&mut self, what: &str) -> Result<&'a str, HeError> {
        self.line_no += 1;
        self.inner
            .next()
            .map(str::trim)
            .ok_or_else(|| HeError::KeyFile(format!("line {}: missing {what}", self.line_no)))
    }

    fn expect_magic(&mut self, magic: &str) -> Result<(), HeError> {
        if self.next("magic")? != magic {
            return Err(HeError::KeyFile(format!("expected header {magic:?}")));
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, HeError> {
        self.next(what)?.parse().map_err(|_| self.err(what))
    }

    fn hex(&mut self, what: &str) -> Result<BigUint, HeError> {
        let line = self.next(what)?;
        BigUint::from_str_radix(line, 16).map_err(|_| self.err(what))
    }

    fn hex_list(&mut self, n: usize, what: &str) -> Result<Vec<BigUint>, HeError> {
        (0..n).map(|_| self.hex(what)).collect()
    }

    fn check_shape(&mut self, params: &SecurityParams) -> Result<(), HeError> {
        let line = self.next("beta alpha frac_bits")?;
        let nums: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err("beta alpha frac_bits")))
            .collect::<Result<_, _>>()?;
        if nums != [params.beta(), params.alpha(), params.frac_bits()] {
            return Err(HeError::KeyFile(format!(
                "line {}: shape {:?} does not match lambda {}",
                self.line_no,
                nums,
                params.lambda()
            )));
        }
        Ok(())
    }

    fn expect_end(&mut self) -> Result<(), HeError> {
        if self.inner.any(|l| !l.trim().is_empty()) {
            return Err(HeError::KeyFile("trailing data".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, seeded_rng};

    #[test]
    fn key_file_round_trip() {
        let params = SecurityParams::new(2).unwrap();
        let (sk, pk, _) = keygen(&params, &mut seeded_rng(1)).unwrap();
        let text = write_key_file(&sk, &pk);
        assert!(text.starts_with("HEDB-KEY v1\n2\n"));
        let (sk2, pk2) = parse_key_file(&text).unwrap();
        assert_eq!(sk, sk2);
        assert_eq!(pk, pk2);
    }

    #[test]
    fn enlarged_modulus_round_trip() {
        let params = SecurityParams::with_p_bits(2, 40).unwrap();
        let (sk, pk, _) = keygen(&params, &mut seeded_rng(2)).unwrap();
        let (sk2, _) = parse_key_file(&write_key_file(&sk, &pk)).unwrap();
        assert_eq!(sk2.params(), &params);
    }

    #[test]
    fn rejects_corruption() {
        let params = SecurityParams::new(2).unwrap();
        let (sk, pk, _) = keygen(&params, &mut seeded_rng(3)).unwrap();
        let text = write_key_file(&sk, &pk);
        assert!(parse_key_file(&text.replace("HEDB-KEY", "HEDB-KEX")).is_err());
        let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(parse_key_file(&truncated).is_err());
        let bad_shape = text.replacen("10 2 4", "10 3 4", 1);
        assert!(parse_key_file(&bad_shape).is_err());
    }

    #[test]
    fn bootstrap_file_round_trip() {
        let params = SecurityParams::bootstrappable(2).unwrap();
        let (_, pk, bk) = keygen(&params, &mut seeded_rng(4)).unwrap();
        let (pk2, bk2) = parse_bootstrap_file(&write_bootstrap_file(&pk, &bk)).unwrap();
        assert_eq!(pk2.y(), pk.y());
        assert_eq!(pk2.params(), pk.params());
        assert_eq!(bk2, bk);
    }

    #[test]
    fn subset_hex_is_fixed_width() {
        let mut s = vec![false; 10];
        s[0] = true;
        s[9] = true;
        assert_eq!(subset_hex(&s), "201");
    }
}
