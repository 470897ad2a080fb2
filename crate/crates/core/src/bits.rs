//! Bit strings, most-significant bit first within each byte.

use bitvec::prelude::*;

use crate::error::{Error, Result};

pub type Bits = BitVec<u8, Msb0>;
pub type BitStr = BitSlice<u8, Msb0>;

/// Append the low `len` bits of `value`, high bit first.
#[inline]
pub fn push_bits(bits: &mut Bits, value: u64, len: u32) {
    for i in (0..len).rev() {
        bits.push((value >> i) & 1 == 1);
    }
}

/// Parse a string of `0`/`1` characters (other characters are ignored).
pub fn from_str01(s: &str) -> Bits {
    s.chars()
        .filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub fn to_str01(bits: &BitStr) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

/// Byte image of a bit string, zero padded to a byte boundary.
pub fn to_bytes(bits: &BitStr) -> Vec<u8> {
    let mut v = bits.to_bitvec();
    v.set_uninitialized(false);
    v.into_vec()
}

/// First `len` bits of `bytes`.
pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Bits> {
    let view = bytes.view_bits::<Msb0>();
    if len > view.len() {
        return Err(Error::LengthMismatch(format!(
            "{len} bits requested from {} bytes",
            bytes.len()
        )));
    }
    Ok(view[..len].to_bitvec())
}

/// Sequential reader over a bit slice.
#[derive(Debug, Clone)]
pub struct BitCursor<'a> {
    bits: &'a BitStr,
    pos: usize,
}

impl<'a> BitCursor<'a> {
    pub fn new(bits: &'a BitStr) -> Self {
        BitCursor { bits, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    #[inline]
    pub fn read_bit(&mut self) -> Option<bool> {
        let b = *self.bits.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }

    pub fn read_bits(&mut self, len: u32) -> Option<u64> {
        if self.remaining() < len as usize {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..len {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Some(v)
    }
}
