//! Global word dictionary: hashed buckets with linear collision lists.

use super::{FrameId, MemError};
use crate::isa::pht::one_at_a_time;

const BUCKETS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictEntry {
    pub name: String,
    pub frame: FrameId,
    pub addr: u16,
    seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    buckets: Vec<Vec<DictEntry>>,
    capacity: usize,
    len: usize,
    seq: u32,
}

fn bucket_of(name: &str) -> usize {
    one_at_a_time(0, name.as_bytes()) as usize % BUCKETS
}

impl Dictionary {
    pub fn new(capacity: usize) -> Self {
        Dictionary { buckets: vec![Vec::new(); BUCKETS], capacity, len: 0, seq: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Bind `name`; an existing binding is shadowed, not replaced.
    pub fn define(&mut self, name: &str, frame: FrameId, addr: u16) -> Result<(), MemError> {
        if self.len >= self.capacity {
            return Err(MemError::DictionaryFull);
        }
        self.seq += 1;
        let e = DictEntry { name: name.to_string(), frame, addr, seq: self.seq };
        self.buckets[bucket_of(name)].push(e);
        self.len += 1;
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&DictEntry> {
        self.buckets[bucket_of(name)].iter().rev().find(|e| e.name == name)
    }

    /// Drop all bindings into `frame`; older shadowed bindings become visible again.
    pub fn remove_frame(&mut self, frame: FrameId) {
        for b in &mut self.buckets {
            let before = b.len();
            b.retain(|e| e.frame != frame);
            self.len -= before - b.len();
        }
    }

    pub fn has_frame(&self, frame: FrameId) -> bool {
        self.buckets.iter().flatten().any(|e| e.frame == frame)
    }

    /// All entries in definition order.
    pub fn entries(&self) -> Vec<&DictEntry> {
        let mut v: Vec<&DictEntry> = self.buckets.iter().flatten().collect();
        v.sort_by_key(|e| e.seq);
        v
    }

    pub fn clear(&mut self) {
        self.buckets.iter_mut().for_each(Vec::clear);
        self.len = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn define_lookup_shadow() {
        let mut d = Dictionary::new(8);
        d.define("f", 1, 120).unwrap();
        assert_eq!(d.lookup("f").unwrap().addr, 120);
        d.define("f", 2, 200).unwrap();
        assert_eq!(d.lookup("f").unwrap().addr, 200);
        assert!(d.lookup("missing").is_none());
        d.remove_frame(2);
        assert_eq!(d.lookup("f").unwrap().addr, 120);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn capacity_limit() {
        let mut d = Dictionary::new(2);
        d.define("a", 1, 0).unwrap();
        d.define("b", 1, 0).unwrap();
        assert_eq!(d.define("c", 1, 0), Err(MemError::DictionaryFull));
    }

    #[test]
    fn entries_in_order() {
        let mut d = Dictionary::new(8);
        for (i, n) in ["x", "y", "z"].iter().enumerate() {
            d.define(n, 1, i as u16).unwrap();
        }
        let names: Vec<&str> = d.entries().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["x", "y", "z"]);
    }
}
