//! Byte-addressed code segment partitioned into code frames.

use std::collections::BTreeMap;

use super::{Cell, MemError};

pub type FrameId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameState {
    Source,
    Compiled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFrame {
    pub id: FrameId,
    pub start: usize,
    pub len: usize,
    pub state: FrameState,
    pub persistent: bool,
    /// Set once a word of this frame is exported.
    pub locked: bool,
    pub task: Option<u16>,
}

impl CodeFrame {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, addr: usize) -> bool {
        addr >= self.start && addr < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSegment {
    bytes: Vec<u8>,
    frames: BTreeMap<FrameId, CodeFrame>,
    /// Free blocks `(start, len)`, sorted and coalesced.
    free: Vec<(usize, usize)>,
    next_id: FrameId,
}

impl CodeSegment {
    pub fn new(size: usize) -> Self {
        CodeSegment {
            bytes: vec![0; size],
            frames: BTreeMap::new(),
            free: if size > 0 { vec![(0, size)] } else { vec![] },
            next_id: 1,
        }
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    pub fn free_blocks(&self) -> &[(usize, usize)] {
        &self.free
    }

    pub fn free_bytes(&self) -> usize {
        self.free.iter().map(|b| b.1).sum()
    }

    pub fn frames(&self) -> impl Iterator<Item = &CodeFrame> {
        self.frames.values()
    }

    pub fn frame(&self, id: FrameId) -> Option<&CodeFrame> {
        self.frames.get(&id)
    }

    pub fn frame_mut(&mut self, id: FrameId) -> Option<&mut CodeFrame> {
        self.frames.get_mut(&id)
    }

    pub fn frame_at(&self, addr: usize) -> Option<&CodeFrame> {
        self.frames.values().find(|f| f.contains(addr))
    }

    /// First-fit allocation of a frame of `len` bytes.
    pub fn alloc_frame(&mut self, len: usize) -> Result<FrameId, MemError> {
        let len = len.max(1);
        let slot = self.free.iter().position(|&(_, l)| l >= len);
        let Some(slot) = slot else {
            return Err(MemError::OutOfSpace { need: len });
        };
        let (start, l) = self.free[slot];
        if l == len {
            self.free.remove(slot);
        } else {
            self.free[slot] = (start + len, l - len);
        }
        let id = self.fresh_id();
        self.frames.insert(
            id,
            CodeFrame {
                id,
                start,
                len,
                state: FrameState::Source,
                persistent: false,
                locked: false,
                task: None,
            },
        );
        Ok(id)
    }

    fn fresh_id(&mut self) -> FrameId {
        while self.frames.contains_key(&self.next_id) || self.next_id == 0 {
            self.next_id = self.next_id.wrapping_add(1);
        }
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1);
        id
    }

    /// Release a frame; locked, persistent and task-owned frames are kept.
    pub fn free_frame(&mut self, id: FrameId) -> Result<(), MemError> {
        let f = self.frames.get(&id).ok_or(MemError::NoFrame(id))?;
        if f.locked {
            return Err(MemError::Locked(id));
        }
        if f.persistent {
            return Err(MemError::Persistent(id));
        }
        if f.task.is_some() {
            return Err(MemError::Busy(id));
        }
        let f = self.frames.remove(&id).unwrap();
        self.release(f.start, f.len);
        Ok(())
    }

    /// Drop every frame (CS reset).
    pub fn reset(&mut self) {
        self.frames.clear();
        self.free = vec![(0, self.bytes.len())];
        self.bytes.fill(0);
    }

    fn release(&mut self, start: usize, len: usize) {
        if len == 0 {
            return;
        }
        let i = self.free.partition_point(|&(s, _)| s < start);
        self.free.insert(i, (start, len));
        if i + 1 < self.free.len() && self.free[i].0 + self.free[i].1 == self.free[i + 1].0 {
            self.free[i].1 += self.free[i + 1].1;
            self.free.remove(i + 1);
        }
        if i > 0 && self.free[i - 1].0 + self.free[i - 1].1 == self.free[i].0 {
            self.free[i - 1].1 += self.free[i].1;
            self.free.remove(i);
        }
    }

    /// Grow a frame in place by `extra` bytes taken from the adjacent free block.
    pub fn extend_frame(&mut self, id: FrameId, extra: usize) -> Result<(), MemError> {
        let end = self.frames.get(&id).ok_or(MemError::NoFrame(id))?.end();
        if extra == 0 {
            return Ok(());
        }
        let slot = self.free.iter().position(|&(s, l)| s == end && l >= extra);
        let Some(slot) = slot else {
            return Err(MemError::OutOfSpace { need: extra });
        };
        let (s, l) = self.free[slot];
        if l == extra {
            self.free.remove(slot);
        } else {
            self.free[slot] = (s + extra, l - extra);
        }
        self.bytes[end..end + extra].fill(0);
        self.frames.get_mut(&id).unwrap().len += extra;
        Ok(())
    }

    /// Shrink a frame to `len` bytes, returning the tail to the free pool.
    pub fn shrink_frame(&mut self, id: FrameId, len: usize) -> Result<(), MemError> {
        let f = self.frames.get_mut(&id).ok_or(MemError::NoFrame(id))?;
        let len = len.max(1);
        if len >= f.len {
            return Ok(());
        }
        let (start, cut) = (f.start + len, f.len - len);
        f.len = len;
        self.release(start, cut);
        Ok(())
    }

    /// Bytes of frames plus free bytes; equals the segment size when nothing leaks.
    pub fn accounted(&self) -> usize {
        self.frames.values().map(|f| f.len).sum::<usize>() + self.free_bytes()
    }

    #[inline]
    pub fn read_u8(&self, addr: usize) -> Option<u8> {
        self.bytes.get(addr).copied()
    }

    #[inline]
    pub fn read_u16(&self, addr: usize) -> Option<u16> {
        let b = self.bytes.get(addr..addr + 2)?;
        Some(u16::from_le_bytes([b[0], b[1]]))
    }

    #[inline]
    pub fn read_cell(&self, addr: usize) -> Option<Cell> {
        self.read_u16(addr).map(|v| v as Cell)
    }

    #[inline]
    pub fn write_cell(&mut self, addr: usize, v: Cell) -> Option<()> {
        let b = self.bytes.get_mut(addr..addr + 2)?;
        b.copy_from_slice(&v.to_le_bytes());
        Some(())
    }

    /// Rebuild from checkpointed parts.
    pub fn from_parts(
        bytes: Vec<u8>,
        frames: Vec<CodeFrame>,
        free: Vec<(usize, usize)>,
        next_id: FrameId,
    ) -> Self {
        CodeSegment { bytes, frames: frames.into_iter().map(|f| (f.id, f)).collect(), free, next_id }
    }

    pub fn next_id(&self) -> FrameId {
        self.next_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sequential_allocation() {
        let mut cs = CodeSegment::new(1024);
        let a = cs.alloc_frame(100).unwrap();
        let b = cs.alloc_frame(100).unwrap();
        assert_eq!(cs.frame(a).unwrap().start, 0);
        assert_eq!(cs.frame(b).unwrap().start, 100);
        assert_eq!(cs.alloc_frame(2000), Err(MemError::OutOfSpace { need: 2000 }));
    }

    #[test]
    fn gap_reuse() {
        let mut cs = CodeSegment::new(1024);
        let _a = cs.alloc_frame(100).unwrap();
        let b = cs.alloc_frame(100).unwrap();
        let _c = cs.alloc_frame(100).unwrap();
        cs.free_frame(b).unwrap();
        let d = cs.alloc_frame(80).unwrap();
        assert_eq!(cs.frame(d).unwrap().start, 100);
        cs.free_frame(d).unwrap();
        let e = cs.alloc_frame(100).unwrap();
        assert_eq!(cs.frame(e).unwrap().start, 100);
    }

    #[test]
    fn locked_frames_survive() {
        let mut cs = CodeSegment::new(256);
        let a = cs.alloc_frame(10).unwrap();
        cs.frame_mut(a).unwrap().locked = true;
        assert_eq!(cs.free_frame(a), Err(MemError::Locked(a)));
        cs.frame_mut(a).unwrap().locked = false;
        cs.frame_mut(a).unwrap().persistent = true;
        assert_eq!(cs.free_frame(a), Err(MemError::Persistent(a)));
    }

    #[test]
    fn extend_and_shrink() {
        let mut cs = CodeSegment::new(64);
        let a = cs.alloc_frame(10).unwrap();
        cs.extend_frame(a, 5).unwrap();
        assert_eq!(cs.frame(a).unwrap().len, 15);
        let b = cs.alloc_frame(10).unwrap();
        assert!(cs.extend_frame(a, 1).is_err());
        cs.shrink_frame(b, 4).unwrap();
        assert_eq!(cs.free_blocks(), &[(19, 45)]);
        assert_eq!(cs.accounted(), 64);
    }

    proptest! {
        #[test]
        fn no_leaks(ops in proptest::collection::vec((any::<bool>(), 1usize..200, any::<u8>()), 1..200)) {
            let mut cs = CodeSegment::new(1024);
            let mut live: Vec<FrameId> = Vec::new();
            for (alloc, len, pick) in ops {
                if alloc || live.is_empty() {
                    if let Ok(id) = cs.alloc_frame(len) {
                        live.push(id);
                    }
                } else {
                    let id = live.remove(pick as usize % live.len());
                    cs.free_frame(id).unwrap();
                }
                prop_assert_eq!(cs.accounted(), 1024);
                let mut spans: Vec<(usize, usize)> = cs.frames().map(|f| (f.start, f.end())).collect();
                spans.sort();
                for w in spans.windows(2) {
                    prop_assert!(w[0].1 <= w[1].0);
                }
            }
        }
    }
}
