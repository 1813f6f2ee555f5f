//! Fixed-width bit packing of quantizer indices.
//!
//! Indices are written MSB-first in element order; the final byte is padded
//! with zero bits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitStream {
    /// Wraps received bytes, checking length and pad bits.
    pub fn from_bytes(bytes: Vec<u8>, bit_len: usize) -> Result<Self> {
        if bytes.len() != bit_len.div_ceil(8) {
            return Err(Error::BitStream(format!(
                "{} bytes cannot hold exactly {bit_len} bits",
                bytes.len()
            )));
        }
        let pad = bytes.len() * 8 - bit_len;
        if pad > 0 {
            let mask = (1u8 << pad) - 1;
            if bytes.last().copied().unwrap_or(0) & mask != 0 {
                return Err(Error::BitStream("nonzero pad bits".into()));
            }
        }
        Ok(Self { bytes, bit_len })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if (1..=32).contains(&bits) {
        Ok(())
    } else {
        Err(Error::BitStream(format!("unsupported width {bits}")))
    }
}

pub fn pack_bits(indices: &[u32], bits: u32) -> Result<BitStream> {
    check_bits(bits)?;
    let bit_len = indices.len() * bits as usize;
    let mut bytes = vec![0u8; bit_len.div_ceil(8)];
    let mut pos = 0usize;
    for &idx in indices {
        if bits < 32 && idx >> bits != 0 {
            return Err(Error::IndexRange { index: idx, bits });
        }
        for b in (0..bits).rev() {
            if (idx >> b) & 1 == 1 {
                bytes[pos / 8] |= 0x80 >> (pos % 8);
            }
            pos += 1;
        }
    }
    Ok(BitStream { bytes, bit_len })
}

pub fn unpack_bits(stream: &BitStream, count: usize, bits: u32) -> Result<Vec<u32>> {
    check_bits(bits)?;
    if count * bits as usize != stream.bit_len {
        return Err(Error::BitStream(format!(
            "stream holds {} bits, expected {count} × {bits}",
            stream.bit_len
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for _ in 0..bits {
            let bit = (stream.bytes[pos / 8] >> (7 - pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            pos += 1;
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nibbles_make_one_byte() {
        let s = pack_bits(&[0xA, 0x5], 4).unwrap();
        assert_eq!(s.bytes(), &[0xA5]);
    }

    #[test]
    fn eighteen_bits_take_three_bytes() {
        let s = pack_bits(&[0x3F, 0x3F, 0x3F], 6).unwrap();
        assert_eq!(s.bytes().len(), 3);
        assert_eq!(s.bytes()[2] & 0x3F, 0);
        assert_eq!(unpack_bits(&s, 3, 6).unwrap(), vec![0x3F; 3]);
    }

    #[test]
    fn rejects_wide_index_and_bad_streams() {
        assert!(pack_bits(&[16], 4).is_err());
        let s = pack_bits(&[1, 2, 3], 6).unwrap();
        assert!(unpack_bits(&s, 2, 6).is_err());
        assert!(BitStream::from_bytes(vec![0, 0, 1], 18).is_err());
        assert!(BitStream::from_bytes(vec![0, 0], 18).is_err());
        assert!(BitStream::from_bytes(vec![0, 0, 0x40], 18).is_ok());
    }
}
