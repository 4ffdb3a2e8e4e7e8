//! Bytecode word formats.
//!
//! The lead byte decides the length:
//! - `0x00..=0x7f`: opcode (1 byte; branch, call and IOS ops carry a u16 LE operand)
//! - `0x80..=0xbf`: short literal, 14-bit signed payload (6 bits of lead ++ 1 byte)
//! - `0xc0..=0xff`: double literal, 30-bit signed payload (6 bits of lead ++ 3 bytes)

use thiserror::Error;

pub const SHORT_MIN: i32 = -(1 << 13);
pub const SHORT_MAX: i32 = (1 << 13) - 1;
pub const DOUBLE_MIN: i32 = -(1 << 29);
pub const DOUBLE_MAX: i32 = (1 << 29) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Literal {
    Short([u8; 2]),
    Double([u8; 4]),
}

impl Literal {
    pub fn bytes(&self) -> &[u8] {
        match self {
            Literal::Short(b) => b,
            Literal::Double(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("literal {0} outside the 30-bit range")]
pub struct LiteralRange(pub i64);

pub fn fits_short(v: i32) -> bool {
    (SHORT_MIN..=SHORT_MAX).contains(&v)
}

pub fn encode_short(v: i32) -> Option<[u8; 2]> {
    fits_short(v).then_some([0x80 | ((v >> 8) as u8 & 0x3f), v as u8])
}

pub fn encode_double(v: i32) -> Result<[u8; 4], LiteralRange> {
    if !(DOUBLE_MIN..=DOUBLE_MAX).contains(&v) {
        return Err(LiteralRange(v as i64));
    }
    Ok([0xc0 | ((v >> 24) as u8 & 0x3f), (v >> 16) as u8, (v >> 8) as u8, v as u8])
}

/// Shortest literal form holding `v`.
pub fn encode_literal(v: i32) -> Result<Literal, LiteralRange> {
    match encode_short(v) {
        Some(b) => Ok(Literal::Short(b)),
        None => encode_double(v).map(Literal::Double),
    }
}

fn sign_extend(v: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((v << shift) as i32) >> shift
}

/// Decode a literal at the start of `b`; returns the value and its length.
pub fn decode_literal(b: &[u8]) -> Option<(i32, usize)> {
    let lead = *b.first()?;
    match lead {
        0x80..=0xbf => {
            let raw = ((lead as u32 & 0x3f) << 8) | *b.get(1)? as u32;
            Some((sign_extend(raw, 14), 2))
        }
        0xc0..=0xff => {
            let t = b.get(1..4)?;
            let raw =
                ((lead as u32 & 0x3f) << 24) | (t[0] as u32) << 16 | (t[1] as u32) << 8 | t[2] as u32;
            Some((sign_extend(raw, 30), 4))
        }
        _ => None,
    }
}
