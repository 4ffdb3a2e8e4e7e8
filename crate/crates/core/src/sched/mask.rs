//! Packed 2-bit-per-task state mask.

/// Mask code of one task slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskBits {
    /// Scheduled, finished or empty.
    None = 0b00,
    Timeout = 0b01,
    Event = 0b10,
    Ready = 0b11,
}

impl MaskBits {
    pub fn from_bits(b: u32) -> MaskBits {
        match b & 3 {
            0b00 => MaskBits::None,
            0b01 => MaskBits::Timeout,
            0b10 => MaskBits::Event,
            _ => MaskBits::Ready,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TaskMask(pub u32);

impl TaskMask {
    pub const SLOTS: usize = 16;

    #[inline]
    pub fn get(self, i: usize) -> MaskBits {
        MaskBits::from_bits(self.0 >> (2 * i))
    }

    #[inline]
    pub fn set(&mut self, i: usize, b: MaskBits) {
        let sh = 2 * i;
        self.0 = (self.0 & !(3 << sh)) | ((b as u32) << sh);
    }

    pub fn any(self) -> bool {
        self.0 != 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get() {
        let mut m = TaskMask::default();
        m.set(0, MaskBits::Ready);
        m.set(3, MaskBits::Timeout);
        m.set(15, MaskBits::Event);
        assert_eq!(m.get(0), MaskBits::Ready);
        assert_eq!(m.get(1), MaskBits::None);
        assert_eq!(m.get(3), MaskBits::Timeout);
        assert_eq!(m.get(15), MaskBits::Event);
        assert_eq!(m.0, 0b11 | 0b01 << 6 | 0b10 << 30);
        m.set(0, MaskBits::None);
        assert_eq!(m.get(0), MaskBits::None);
    }
}
