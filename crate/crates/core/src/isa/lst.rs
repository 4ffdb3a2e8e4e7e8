//! Linear search table: per-length character tries flattened into one byte array.
//!
//! Layout: one byte `l_max`, then `l_max` little-endian u16 root slice positions
//! (entry index into the body, `0xFFFF` when no word has that length), then the
//! body of two-byte entries.
//!
//! Entry `(a, b)`:
//! - `a & 0x7f` is the character, `a & 0x80` marks a leaf (last character of a word)
//! - `b & 0x7f` is the forward branch in entries (inner) or the word index (leaf)
//! - `b & 0x80` marks the last entry of its slice; running past it means Not-Found
//!
//! A branch that does not fit in 7 bits lands on a trampoline entry `(0x01, off)`
//! which forwards again. Trampolines sit between slices and are never scanned.

use super::{IsaError, WordList};

const LEAF: u8 = 0x80;
const LAST: u8 = 0x80;
const TRAMPOLINE: u8 = 0x01;
const MAX_BRANCH: usize = 0x7f;
const NO_ROOT: u16 = 0xffff;
const LAYOUT_ROUNDS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSearchTable {
    max_len: u8,
    roots: Vec<u16>,
    body: Vec<[u8; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstStats {
    pub size_bytes: usize,
    pub slices: usize,
    pub trampolines: usize,
    pub min_branches: usize,
    pub max_branches: usize,
    pub avg_branches: f64,
}

// Layout-time representation: a list of items (slices or trampolines).
#[derive(Debug, Clone)]
enum Target {
    Item(usize),
    Leaf(u8),
}

#[derive(Debug, Clone)]
enum Item {
    Slice(Vec<(u8, Target)>),
    Trampoline(usize),
}

impl Item {
    fn len(&self) -> usize {
        match self {
            Item::Slice(e) => e.len(),
            Item::Trampoline(_) => 1,
        }
    }
}

struct TrieNode {
    children: Vec<(u8, TrieNode)>,
    index: Option<u8>,
}

impl TrieNode {
    fn new() -> Self {
        TrieNode { children: Vec::new(), index: None }
    }

    fn insert(&mut self, s: &[u8], index: u8) {
        match s.split_first() {
            None => self.index = Some(index),
            Some((&c, rest)) => {
                let pos = match self.children.iter().position(|(k, _)| *k == c) {
                    Some(p) => p,
                    None => {
                        self.children.push((c, TrieNode::new()));
                        self.children.len() - 1
                    }
                };
                self.children[pos].1.insert(rest, index);
            }
        }
    }
}

// Depth-first emission; returns the item id of the node's slice.
fn emit(node: &TrieNode, items: &mut Vec<Item>) -> usize {
    let id = items.len();
    items.push(Item::Slice(Vec::new()));
    let mut entries = Vec::with_capacity(node.children.len());
    for (c, child) in &node.children {
        let target = match child.index {
            Some(ix) if child.children.is_empty() => Target::Leaf(ix),
            _ => Target::Item(emit(child, items)),
        };
        entries.push((*c, target));
    }
    items[id] = Item::Slice(entries);
    id
}

fn positions(items: &[Item]) -> Vec<usize> {
    let mut pos = Vec::with_capacity(items.len() + 1);
    let mut p = 0;
    for it in items {
        pos.push(p);
        p += it.len();
    }
    pos.push(p);
    pos
}

/// Insert trampolines until every branch fits the 7-bit field.
fn fix_branches(items: &mut Vec<Item>, roots: &mut [Option<usize>]) -> Result<(), IsaError> {
    for _ in 0..LAYOUT_ROUNDS {
        let pos = positions(items);
        let mut violation = None;
        'scan: for (id, it) in items.iter().enumerate() {
            match it {
                Item::Slice(entries) => {
                    for (k, (_, t)) in entries.iter().enumerate() {
                        if let Target::Item(t) = t {
                            if pos[*t] - (pos[id] + k) > MAX_BRANCH {
                                violation = Some((id, Some(k), pos[id] + k));
                                break 'scan;
                            }
                        }
                    }
                }
                Item::Trampoline(t) => {
                    if pos[*t] - pos[id] > MAX_BRANCH {
                        violation = Some((id, None, pos[id]));
                        break 'scan;
                    }
                }
            }
        }
        let Some((src, entry, from)) = violation else {
            return Ok(());
        };
        // last item boundary within reach of the branch source
        let at = (src + 1..items.len())
            .take_while(|&i| pos[i] - from <= MAX_BRANCH)
            .last()
            .ok_or(IsaError::LstLayout)?;
        let target = match (&items[src], entry) {
            (Item::Slice(e), Some(k)) => match e[k].1 {
                Target::Item(t) => t,
                Target::Leaf(_) => unreachable!(),
            },
            (Item::Trampoline(t), None) => *t,
            _ => unreachable!(),
        };
        if target <= at {
            return Err(IsaError::LstLayout);
        }
        items.insert(at, Item::Trampoline(target));
        // renumber references past the insertion point (including the new trampoline's)
        let bump = |t: &mut usize| {
            if *t >= at {
                *t += 1
            }
        };
        for it in items.iter_mut() {
            match it {
                Item::Slice(e) => e.iter_mut().for_each(|(_, t)| {
                    if let Target::Item(t) = t {
                        bump(t)
                    }
                }),
                Item::Trampoline(t) => bump(t),
            }
        }
        roots.iter_mut().flatten().for_each(bump);
        let src = if src >= at { src + 1 } else { src };
        match (&mut items[src], entry) {
            (Item::Slice(e), Some(k)) => e[k].1 = Target::Item(at),
            (Item::Trampoline(t), None) => *t = at,
            _ => unreachable!(),
        }
    }
    Err(IsaError::LstLayout)
}

impl LinearSearchTable {
    pub fn build(wl: &WordList) -> Result<Self, IsaError> {
        if wl.is_empty() {
            return Err(IsaError::Empty);
        }
        let max_len = wl.max_len();
        let mut tries: Vec<TrieNode> = (0..max_len).map(|_| TrieNode::new()).collect();
        for w in wl.words() {
            tries[w.name.len() - 1].insert(w.name.as_bytes(), w.opcode);
        }
        let mut items = Vec::new();
        let mut roots: Vec<Option<usize>> = tries
            .iter()
            .map(|t| (!t.children.is_empty()).then(|| emit(t, &mut items)))
            .collect();
        fix_branches(&mut items, &mut roots)?;

        let pos = positions(&items);
        let mut body = Vec::with_capacity(pos[items.len()]);
        for (id, it) in items.iter().enumerate() {
            match it {
                Item::Slice(entries) => {
                    for (k, (c, t)) in entries.iter().enumerate() {
                        let last = if k + 1 == entries.len() { LAST } else { 0 };
                        body.push(match t {
                            Target::Leaf(ix) => [c | LEAF, ix | last],
                            Target::Item(t) => [*c, (pos[*t] - (pos[id] + k)) as u8 | last],
                        });
                    }
                }
                Item::Trampoline(t) => body.push([TRAMPOLINE, (pos[*t] - pos[id]) as u8]),
            }
        }
        if body.len() >= NO_ROOT as usize {
            return Err(IsaError::LstLayout);
        }
        let roots = roots.iter().map(|r| r.map_or(NO_ROOT, |r| pos[r] as u16)).collect();
        Ok(LinearSearchTable { max_len: max_len as u8, roots, body })
    }

    pub fn lookup(&self, s: &[u8]) -> Option<u8> {
        self.lookup_counted(s).0
    }

    /// Lookup that also reports how many slices were scanned.
    pub fn lookup_counted(&self, s: &[u8]) -> (Option<u8>, usize) {
        let mut slices = 0;
        if s.is_empty() || s.len() > self.max_len as usize {
            return (None, slices);
        }
        let root = self.roots[s.len() - 1];
        if root == NO_ROOT {
            return (None, slices);
        }
        let mut pos = self.follow(root as usize);
        for (k, &c) in s.iter().enumerate() {
            slices += 1;
            loop {
                let [a, b] = self.body[pos];
                if a & 0x7f == c {
                    if a & LEAF != 0 {
                        let hit = (k + 1 == s.len()).then_some(b & 0x7f);
                        return (hit, slices);
                    }
                    pos = self.follow(pos + (b & 0x7f) as usize);
                    break;
                }
                if b & LAST != 0 {
                    return (None, slices);
                }
                pos += 1;
            }
        }
        (None, slices)
    }

    fn follow(&self, mut pos: usize) -> usize {
        while self.body[pos][0] == TRAMPOLINE {
            pos += self.body[pos][1] as usize;
        }
        pos
    }

    pub fn size_bytes(&self) -> usize {
        1 + 2 * self.roots.len() + 2 * self.body.len()
    }

    pub fn stats(&self) -> LstStats {
        let trampolines = self.body.iter().filter(|e| e[0] == TRAMPOLINE).count();
        let mut sizes = Vec::new();
        let mut run = 0;
        for e in self.body.iter().filter(|e| e[0] != TRAMPOLINE) {
            run += 1;
            if e[1] & LAST != 0 {
                sizes.push(run);
                run = 0;
            }
        }
        let total: usize = sizes.iter().sum();
        LstStats {
            size_bytes: self.size_bytes(),
            slices: sizes.len(),
            trampolines,
            min_branches: sizes.iter().copied().min().unwrap_or(0),
            max_branches: sizes.iter().copied().max().unwrap_or(0),
            avg_branches: if sizes.is_empty() { 0.0 } else { total as f64 / sizes.len() as f64 },
        }
    }

    /// Whether the table has a subtree for words of length `len`.
    pub fn has_subtree(&self, len: usize) -> bool {
        len >= 1 && len <= self.roots.len() && self.roots[len - 1] != NO_ROOT
    }

    /// Check that every branch points forward onto a slice start or trampoline.
    pub fn validate(&self) -> bool {
        let mut starts = vec![false; self.body.len()];
        let mut begin = true;
        for (i, e) in self.body.iter().enumerate() {
            if e[0] == TRAMPOLINE {
                starts[i] = true;
                begin = true;
                continue;
            }
            starts[i] = begin;
            begin = e[1] & LAST != 0;
        }
        self.body.iter().enumerate().all(|(i, e)| {
            let inner = e[0] == TRAMPOLINE || e[0] & LEAF == 0;
            if !inner {
                return true;
            }
            let off = (e[1] & 0x7f) as usize;
            off > 0 && i + off < self.body.len() && starts[i + off]
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size_bytes() + 2);
        out.extend_from_slice(&(self.body.len() as u16).to_le_bytes());
        out.push(self.max_len);
        for r in &self.roots {
            out.extend_from_slice(&r.to_le_bytes());
        }
        for e in &self.body {
            out.extend_from_slice(e);
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, IsaError> {
        let bad = || IsaError::Artifact("truncated linear search blob".into());
        if b.len() < 3 {
            return Err(bad());
        }
        let n = u16::from_le_bytes([b[0], b[1]]) as usize;
        let max_len = b[2] as usize;
        if b.len() != 3 + 2 * max_len + 2 * n || max_len == 0 {
            return Err(bad());
        }
        let roots = (0..max_len).map(|i| u16::from_le_bytes([b[3 + 2 * i], b[4 + 2 * i]])).collect();
        let body_at = 3 + 2 * max_len;
        let body = b[body_at..].chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let t = LinearSearchTable { max_len: max_len as u8, roots, body };
        if t.roots.iter().any(|&r| r != NO_ROOT && r as usize >= n) || !t.validate() {
            return Err(IsaError::Artifact("inconsistent linear search blob".into()));
        }
        Ok(t)
    }
}
