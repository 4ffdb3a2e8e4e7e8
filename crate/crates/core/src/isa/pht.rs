//! Order-preserving minimal perfect hash over the core word list.
//!
//! Every word is an edge of a random 3-uniform hypergraph whose vertices are
//! the cells of the auxiliary byte table. If the hypergraph can be peeled, the
//! auxiliary values are assigned in reverse peeling order so that
//! `(aux[v0] + aux[v1] + aux[v2]) mod m` equals the word's opcode. The string
//! check table rejects strings outside the word set.

use super::{IsaError, WordList};

const SEED_ATTEMPTS: u32 = 10_000;

/// Jenkins one-at-a-time hash with a seeded initial state.
pub fn one_at_a_time(seed: u32, bytes: &[u8]) -> u32 {
    let mut h = seed;
    for &b in bytes {
        h = h.wrapping_add(b as u32);
        h = h.wrapping_add(h << 10);
        h ^= h >> 6;
    }
    h = h.wrapping_add(h << 3);
    h ^= h >> 11;
    h.wrapping_add(h << 15)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerfectHashTable {
    seed: u32,
    /// Vertices per hash partition; the aux table holds `3 * part` bytes.
    part: u16,
    words: u16,
    max_len: u8,
    aux: Vec<u8>,
    check: Vec<u8>,
}

fn edge(seed: u32, part: u32, s: &[u8]) -> [usize; 3] {
    let h0 = one_at_a_time(seed, s) % part;
    let h1 = one_at_a_time(seed ^ 0x9e37_79b9, s) % part;
    let h2 = one_at_a_time(seed ^ 0x85eb_ca6b, s) % part;
    [h0 as usize, (part + h1) as usize, (2 * part + h2) as usize]
}

impl PerfectHashTable {
    pub fn build(wl: &WordList) -> Result<Self, IsaError> {
        Self::build_from(wl, 0)
    }

    /// Search seeds starting at `first_seed` until the hypergraph peels.
    pub fn build_from(wl: &WordList, first_seed: u32) -> Result<Self, IsaError> {
        if wl.is_empty() {
            return Err(IsaError::Empty);
        }
        let m = wl.len();
        let part = (m * 5).div_ceil(12).max(1) as u32; // 3 * part ~ 1.25 m
        let max_len = wl.max_len();
        let mut check = vec![0u8; m * max_len];
        for w in wl.words() {
            let row = w.opcode as usize * max_len;
            check[row..row + w.name.len()].copy_from_slice(w.name.as_bytes());
        }
        for seed in first_seed..first_seed.saturating_add(SEED_ATTEMPTS) {
            let edges: Vec<[usize; 3]> =
                wl.words().iter().map(|w| edge(seed, part, w.name.as_bytes())).collect();
            if let Some(aux) = assign(&edges, wl, 3 * part as usize) {
                return Ok(PerfectHashTable {
                    seed,
                    part: part as u16,
                    words: m as u16,
                    max_len: max_len as u8,
                    aux,
                    check,
                });
            }
        }
        Err(IsaError::PhtConstruction(SEED_ATTEMPTS))
    }

    /// Raw hash index of `s` (always in `0..m`, even for non-words).
    pub fn hash(&self, s: &[u8]) -> usize {
        let [a, b, c] = edge(self.seed, self.part as u32, s);
        (self.aux[a] as usize + self.aux[b] as usize + self.aux[c] as usize) % self.words as usize
    }

    /// Opcode of `s`, verified against the string check table.
    pub fn lookup(&self, s: &[u8]) -> Option<u8> {
        if s.is_empty() || s.len() > self.max_len as usize {
            return None;
        }
        let idx = self.hash(s);
        let row = &self.check[idx * self.max_len as usize..(idx + 1) * self.max_len as usize];
        let stored = &row[..row.iter().position(|&b| b == 0).unwrap_or(row.len())];
        (stored == s).then_some(idx as u8)
    }

    pub fn seed(&self) -> u32 {
        self.seed
    }

    pub fn aux_len(&self) -> usize {
        self.aux.len()
    }

    pub fn check_len(&self) -> usize {
        self.check.len()
    }

    /// Bytes needed by the hash tables (aux + string check table).
    pub fn size_bytes(&self) -> usize {
        self.aux.len() + self.check.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + self.size_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.part.to_le_bytes());
        out.extend_from_slice(&self.words.to_le_bytes());
        out.push(self.max_len);
        out.extend_from_slice(&self.aux);
        out.extend_from_slice(&self.check);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, IsaError> {
        let bad = || IsaError::Artifact("truncated perfect hash blob".into());
        if b.len() < 9 {
            return Err(bad());
        }
        let seed = u32::from_le_bytes(b[0..4].try_into().unwrap());
        let part = u16::from_le_bytes(b[4..6].try_into().unwrap());
        let words = u16::from_le_bytes(b[6..8].try_into().unwrap());
        let max_len = b[8];
        let aux_len = 3 * part as usize;
        let check_len = words as usize * max_len as usize;
        if b.len() != 9 + aux_len + check_len || words == 0 || part == 0 {
            return Err(bad());
        }
        Ok(PerfectHashTable {
            seed,
            part,
            words,
            max_len,
            aux: b[9..9 + aux_len].to_vec(),
            check: b[9 + aux_len..].to_vec(),
        })
    }
}

/// Peel the hypergraph and assign aux values; `None` if it has a 2-core.
fn assign(edges: &[[usize; 3]], wl: &WordList, n: usize) -> Option<Vec<u8>> {
    let m = edges.len();
    let mut degree = vec![0u32; n];
    // xor of incident edge ids lets a degree-1 vertex name its last edge
    let mut incident = vec![0usize; n];
    for (e, vs) in edges.iter().enumerate() {
        for &v in vs {
            degree[v] += 1;
            incident[v] ^= e;
        }
    }
    let mut stack: Vec<(usize, usize)> = Vec::with_capacity(m);
    let mut removed = vec![false; m];
    let mut queue: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    while let Some(v) = queue.pop() {
        if degree[v] != 1 {
            continue;
        }
        let e = incident[v];
        if removed[e] {
            continue;
        }
        removed[e] = true;
        stack.push((e, v));
        for &u in &edges[e] {
            degree[u] -= 1;
            incident[u] ^= e;
            if degree[u] == 1 {
                queue.push(u);
            }
        }
    }
    if stack.len() != m {
        return None;
    }
    let mut aux = vec![0u32; n];
    while let Some((e, free)) = stack.pop() {
        let target = wl.words()[e].opcode as u32;
        let others: u32 = edges[e].iter().filter(|&&u| u != free).map(|&u| aux[u]).sum();
        let m = m as u32;
        aux[free] = (target + 2 * m - others % m) % m;
    }
    Some(aux.into_iter().map(|v| v as u8).collect())
}
