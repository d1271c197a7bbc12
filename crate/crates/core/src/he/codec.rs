//! Binary ciphertext format.
//!
//! ```text
//! u32  byte length of c          (big-endian)
//! ..   magnitude of c            (big-endian, no leading zero bytes)
//! u32  noise_bits
//! u8   1 if a squash vector follows, else 0
//! ..   beta values, each ceil((frac_bits + 1) / 8) bytes big-endian
//! ```

use num_bigint::BigUint;

use super::squash::z_value_bytes;
use super::{Ciphertext, SecurityParams};
use crate::bytes::{ByteReader, DecodeError};

/// Shape of the squash vector, needed to read or write one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZLayout {
    pub beta: usize,
    pub frac_bits: u32,
}

impl ZLayout {
    pub fn of(params: &SecurityParams) -> Self {
        ZLayout {
            beta: params.beta() as usize,
            frac_bits: params.frac_bits(),
        }
    }
}

/// Appends `ct`. The squash vector is written only when a layout is given.
pub fn write_ciphertext(out: &mut Vec<u8>, ct: &Ciphertext, layout: Option<ZLayout>) {
    let mag = if ct.value().bits() == 0 {
        Vec::new()
    } else {
        ct.value().to_bytes_be()
    };
    out.extend_from_slice(&(mag.len() as u32).to_be_bytes());
    out.extend_from_slice(&mag);
    let noise = u32::try_from(ct.noise_bits()).unwrap_or(u32::MAX);
    out.extend_from_slice(&noise.to_be_bytes());
    match (ct.z(), layout) {
        (Some(z), Some(layout)) if z.len() == layout.beta => {
            out.push(1);
            let width = z_value_bytes(layout.frac_bits);
            for &v in z {
                out.extend_from_slice(&v.to_be_bytes()[8 - width..]);
            }
        }
        _ => out.push(0),
    }
}

pub fn read_ciphertext(
    r: &mut ByteReader<'_>,
    layout: Option<ZLayout>,
) -> Result<Ciphertext, DecodeError> {
    let len = r.u32()? as usize;
    let at = r.position();
    let mag = r.take(len)?;
    if len > 0 && mag[0] == 0 {
        return Err(DecodeError::Invalid {
            offset: at,
            what: "ciphertext with leading zero byte".into(),
        });
    }
    let c = BigUint::from_bytes_be(mag);
    let noise_bits = u64::from(r.u32()?);
    let z = match r.u8()? {
        0 => None,
        1 => {
            let layout = layout.ok_or_else(|| r.invalid("squash vector without layout"))?;
            let width = z_value_bytes(layout.frac_bits);
            let mut z = Vec::with_capacity(layout.beta);
            for _ in 0..layout.beta {
                let raw = r.take(width)?;
                let v = raw.iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
                if v >> (layout.frac_bits + 1) != 0 {
                    return Err(r.invalid("squash value out of range"));
                }
                z.push(v);
            }
            Some(z)
        }
        _ => return Err(r.invalid("squash flag")),
    };
    Ok(Ciphertext::from_parts(c, z, noise_bits))
}

pub fn ciphertext_to_bytes(ct: &Ciphertext, layout: Option<ZLayout>) -> Vec<u8> {
    let mut out = Vec::new();
    write_ciphertext(&mut out, ct, layout);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{keygen, seeded_rng, BitEncryptor};
    use proptest::prelude::*;

    #[test]
    fn layout_of_small_value() {
        let ct = Ciphertext::from_parts(BigUint::from(0x0102u32), None, 3);
        assert_eq!(
            ciphertext_to_bytes(&ct, None),
            vec![0, 0, 0, 2, 1, 2, 0, 0, 0, 3, 0]
        );
    }

    #[test]
    fn zero_has_empty_magnitude() {
        let ct = Ciphertext::trivial(false);
        let bytes = ciphertext_to_bytes(&ct, None);
        assert_eq!(bytes, vec![0, 0, 0, 0, 0, 0, 0, 1, 0]);
        assert_eq!(read_ciphertext(&mut ByteReader::new(&bytes), None).unwrap(), ct);
    }

    #[test]
    fn squash_vector_round_trips() {
        let params = SecurityParams::new(2).unwrap();
        let mut rng = seeded_rng(3);
        let (sk, pk, _) = keygen(&params, &mut rng).unwrap();
        let ct = pk.squash(&sk.encrypt_bit(true, &mut rng));
        let layout = ZLayout::of(&params);
        let bytes = ciphertext_to_bytes(&ct, Some(layout));
        let back = read_ciphertext(&mut ByteReader::new(&bytes), Some(layout)).unwrap();
        assert_eq!(back, ct);
        assert!(read_ciphertext(&mut ByteReader::new(&bytes), None).is_err());
    }

    #[test]
    fn truncated_input() {
        let ct = Ciphertext::from_parts(BigUint::from(99999u32), None, 3);
        let bytes = ciphertext_to_bytes(&ct, None);
        for cut in 0..bytes.len() {
            assert!(read_ciphertext(&mut ByteReader::new(&bytes[..cut]), None).is_err());
        }
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..64), noise in 0u64..10_000) {
            let ct = Ciphertext::from_parts(BigUint::from_bytes_be(&bytes), None, noise);
            let enc = ciphertext_to_bytes(&ct, None);
            let back = read_ciphertext(&mut ByteReader::new(&enc), None).unwrap();
            prop_assert_eq!(&back, &ct);
            prop_assert_eq!(ciphertext_to_bytes(&back, None), enc);
        }
    }
}
