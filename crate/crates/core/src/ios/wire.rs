//! Byte framing for the message call-gate.
//!
//! Frame: `0xA5, type, len_lo, len_hi, payload[len], xor` where `xor` is the
//! XOR of every byte from `type` through the end of the payload.

use thiserror::Error;

pub const SYNC: u8 = 0xA5;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;
/// Response type sent for a frame that failed its checksum.
pub const NAK: u8 = 0x15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("checksum mismatch")]
    Checksum,
    #[error("truncated frame")]
    Truncated,
    #[error("missing sync byte")]
    Sync,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: u8,
    pub payload: Vec<u8>,
}

fn checksum(kind: u8, len: [u8; 2], payload: &[u8]) -> u8 {
    payload.iter().fold(kind ^ len[0] ^ len[1], |a, b| a ^ b)
}

pub fn encode(kind: u8, payload: &[u8]) -> Result<Vec<u8>, WireError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::Oversize(payload.len()));
    }
    let len = (payload.len() as u16).to_le_bytes();
    let mut out = Vec::with_capacity(payload.len() + 5);
    out.extend([SYNC, kind, len[0], len[1]]);
    out.extend_from_slice(payload);
    out.push(checksum(kind, len, payload));
    Ok(out)
}

/// Decode exactly one frame occupying all of `b`.
pub fn decode(b: &[u8]) -> Result<Frame, WireError> {
    let mut d = Decoder::default();
    d.push(b);
    match d.next_frame() {
        Some(r) if d.buf.is_empty() => r,
        Some(_) => Err(WireError::Sync),
        None if b.first() != Some(&SYNC) => Err(WireError::Sync),
        None => Err(WireError::Truncated),
    }
}

/// Incremental decoder over a byte stream; bytes before a sync byte are
/// discarded.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    buf: Vec<u8>,
}

impl Decoder {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, or `None` if more bytes are needed. A frame with
    /// a bad checksum is consumed and reported as an error.
    pub fn next_frame(&mut self) -> Option<Result<Frame, WireError>> {
        let start = self.buf.iter().position(|&b| b == SYNC);
        match start {
            None => {
                self.buf.clear();
                return None;
            }
            Some(s) => {
                self.buf.drain(..s);
            }
        }
        if self.buf.len() < 4 {
            return None;
        }
        let len = u16::from_le_bytes([self.buf[2], self.buf[3]]) as usize;
        if self.buf.len() < len + 5 {
            return None;
        }
        let kind = self.buf[1];
        let payload = self.buf[4..4 + len].to_vec();
        let sum = self.buf[4 + len];
        let ok = sum == checksum(kind, [self.buf[2], self.buf[3]], &payload);
        self.buf.drain(..len + 5);
        Some(if ok { Ok(Frame { kind, payload }) } else { Err(WireError::Checksum) })
    }
}

/// Little-endian field reader for payloads.
pub struct Reader<'a> {
    b: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(b: &'a [u8]) -> Self {
        Reader { b }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.b.len() < n {
            return Err(WireError::Truncated);
        }
        let (h, t) = self.b.split_at(n);
        self.b = t;
        Ok(h)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn i16(&mut self) -> Result<i16, WireError> {
        Ok(self.u16()? as i16)
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32, WireError> {
        Ok(self.u32()? as i32)
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.b)
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
}
