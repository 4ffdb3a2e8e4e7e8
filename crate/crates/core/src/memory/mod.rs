//! Code segment, stacks and the global word dictionary.

pub mod cs;
pub mod dict;
pub mod stack;

pub use cs::{CodeFrame, CodeSegment, FrameId, FrameState};
pub use dict::{DictEntry, Dictionary};
pub use stack::Stack;

use thiserror::Error;

/// One 16-bit stack word.
pub type Cell = i16;

/// Two cells forming a signed 32-bit value. On a stack the msw is pushed first,
/// so the lsw is on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DoubleCell {
    pub msw: Cell,
    pub lsw: Cell,
}

impl DoubleCell {
    pub fn from_i32(v: i32) -> Self {
        DoubleCell { msw: (v >> 16) as Cell, lsw: v as Cell }
    }

    pub fn to_i32(self) -> i32 {
        ((self.msw as i32) << 16) | (self.lsw as u16 as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("code segment exhausted: need {need} bytes")]
    OutOfSpace { need: usize },
    #[error("frame {0} is locked")]
    Locked(FrameId),
    #[error("frame {0} is persistent")]
    Persistent(FrameId),
    #[error("frame {0} has a live task")]
    Busy(FrameId),
    #[error("no frame {0}")]
    NoFrame(FrameId),
    #[error("dictionary full")]
    DictionaryFull,
    #[error("stack overflow")]
    Overflow,
    #[error("stack underflow")]
    Underflow,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_cell_halves() {
        let d = DoubleCell::from_i32(70000);
        assert_eq!((d.msw, d.lsw), (1, 4464));
        assert_eq!(d.to_i32(), 70000);
        assert_eq!(DoubleCell::from_i32(-1), DoubleCell { msw: -1, lsw: -1 });
        assert_eq!(DoubleCell::from_i32(i32::MIN).to_i32(), i32::MIN);
    }
}
