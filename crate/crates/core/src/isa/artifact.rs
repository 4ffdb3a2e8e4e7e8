//! Generated table bundle and its interchange formats.
//!
//! Artifact layout (little-endian): `"RXIS"`, version byte, word count (u16),
//! PHT blob length (u32) + blob, LST blob length (u32) + blob, then the name
//! table: per word a length-prefixed name and a length-prefixed tag.

use std::fmt::Write as _;

use super::{IsaError, LinearSearchTable, PerfectHashTable, WordList};

pub const MAGIC: &[u8; 4] = b"RXIS";
pub const VERSION: u8 = 1;

/// Which generated structure the compiler uses to resolve core words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookupMode {
    #[default]
    Pht,
    Lst,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsaTables {
    pub wordlist: WordList,
    pub pht: PerfectHashTable,
    pub lst: LinearSearchTable,
}

impl IsaTables {
    pub fn generate(wordlist: WordList) -> Result<Self, IsaError> {
        let pht = PerfectHashTable::build(&wordlist)?;
        let lst = LinearSearchTable::build(&wordlist)?;
        Ok(IsaTables { wordlist, pht, lst })
    }

    pub fn lookup(&self, name: &str, mode: LookupMode) -> Option<u8> {
        match mode {
            LookupMode::Pht => self.pht.lookup(name.as_bytes()),
            LookupMode::Lst => self.lst.lookup(name.as_bytes()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.wordlist.len() as u16).to_le_bytes());
        for blob in [self.pht.to_bytes(), self.lst.to_bytes()] {
            out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            out.extend_from_slice(&blob);
        }
        for w in self.wordlist.words() {
            out.push(w.name.len() as u8);
            out.extend_from_slice(w.name.as_bytes());
            out.push(w.tag.len() as u8);
            out.extend_from_slice(w.tag.as_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, IsaError> {
        let mut r = Reader { b, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(IsaError::Artifact("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(IsaError::Artifact(format!("unsupported version {version}")));
        }
        let count = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let pht_len = r.u32()?;
        let pht = PerfectHashTable::from_bytes(r.take(pht_len)?)?;
        let lst_len = r.u32()?;
        let lst = LinearSearchTable::from_bytes(r.take(lst_len)?)?;
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.take(1)?[0] as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| IsaError::Artifact("non-ASCII name".into()))?;
            let n = r.take(1)?[0] as usize;
            let tag = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| IsaError::Artifact("non-ASCII tag".into()))?;
            pairs.push((name, tag));
        }
        if r.at != b.len() {
            return Err(IsaError::Artifact("trailing bytes".into()));
        }
        let wordlist = WordList::from_pairs(pairs)?;
        let tables = IsaTables { wordlist, pht, lst };
        for w in tables.wordlist.words() {
            if tables.pht.lookup(w.name.as_bytes()) != Some(w.opcode)
                || tables.lst.lookup(w.name.as_bytes()) != Some(w.opcode)
            {
                return Err(IsaError::Artifact(format!("tables disagree on `{}`", w.name)));
            }
        }
        Ok(tables)
    }

    /// Emit the tables as Rust source constants.
    pub fn to_rust_source(&self) -> String {
        let mut s = String::from("// Generated by `rexa gen-isa`. Do not edit.\n\n");
        let _ = writeln!(s, "pub const WORD_COUNT: usize = {};", self.wordlist.len());
        s.push_str("pub const WORDS: &[(&str, &str)] = &[\n");
        for w in self.wordlist.words() {
            let _ = writeln!(s, "    ({:?}, {:?}),", w.name, w.tag);
        }
        s.push_str("];\n");
        for (name, blob) in [("PHT_BLOB", self.pht.to_bytes()), ("LST_BLOB", self.lst.to_bytes())] {
            let _ = writeln!(s, "pub const {name}: [u8; {}] = [", blob.len());
            for chunk in blob.chunks(16) {
                let row: Vec<String> = chunk.iter().map(|b| format!("0x{b:02x}")).collect();
                let _ = writeln!(s, "    {},", row.join(", "));
            }
            s.push_str("];\n");
        }
        s
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IsaError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| IsaError::Artifact("truncated artifact".into()))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, IsaError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::default_tables;

    #[test]
    fn artifact_round_trip() {
        let t = default_tables();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"RXIS");
        assert_eq!(bytes[4], VERSION);
        assert_eq!(u16::from_le_bytes([bytes[5], bytes[6]]), 101);
        assert_eq!(IsaTables::from_bytes(&bytes).unwrap(), *t);
    }

    #[test]
    fn artifact_rejects_corruption() {
        let mut bytes = default_tables().to_bytes();
        assert!(IsaTables::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(IsaTables::from_bytes(&bytes).is_err());
    }

    #[test]
    fn rust_source_lists_every_word() {
        let src = default_tables().to_rust_source();
        assert!(src.contains("pub const WORD_COUNT: usize = 101;"));
        assert!(src.contains("(\"vecfold\", \"vecfold\")"));
        assert!(src.contains("pub const LST_BLOB"));
    }
}
