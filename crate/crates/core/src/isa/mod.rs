//! Instruction-set configuration and the word lookup tables generated from it.
//!
//! A word list document names every core word together with a semantics tag.
//! Opcodes are assigned in document order, which gives the interpreter a dense
//! `0..opcode_max` range for table dispatch. From the same list the generator
//! derives a perfect hash table ([`pht`]) and a linear search table ([`lst`]);
//! both map a word string to its opcode and are interchangeable in the compiler.

pub mod artifact;
pub mod lst;
pub mod opcodes;
pub mod pht;

use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use serde::Deserialize;
use thiserror::Error;

pub use artifact::IsaTables;
pub use artifact::LookupMode;
pub use lst::LinearSearchTable;
pub use opcodes::Opcodes;
pub use pht::PerfectHashTable;

/// Upper bound on word names; longer names cannot be stored in the check table rows.
pub const MAX_NAME_LEN: usize = 15;

/// Opcodes occupy the lower half of the lead byte, literals the upper half.
pub const OPCODE_LIMIT: usize = 0x80;

/// The default core word list shipped with the VM.
pub const CORE_WORDS_JSON: &str = include_str!("core_words.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("malformed word list: {0}")]
    Malformed(String),
    #[error("duplicate word name `{0}`")]
    Duplicate(String),
    #[error("invalid word name `{0}`")]
    InvalidName(String),
    #[error("word name `{0}` is longer than {MAX_NAME_LEN} characters")]
    NameTooLong(String),
    #[error("word list has {0} entries, at most {OPCODE_LIMIT} opcodes are available")]
    TooManyWords(usize),
    #[error("word list is empty")]
    Empty,
    #[error("no perfect hash found after {0} seeds")]
    PhtConstruction(u32),
    #[error("linear search table layout did not converge")]
    LstLayout,
    #[error("bad table artifact: {0}")]
    Artifact(String),
}

/// One core word: its source name, opcode and semantics tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub name: String,
    pub opcode: u8,
    pub tag: String,
}

/// Ordered core word list. Opcodes are consecutive from zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordList {
    words: Vec<Word>,
}

#[derive(Deserialize)]
struct WordEntry {
    name: String,
    tag: String,
}

fn valid_name_char(c: char) -> bool {
    c.is_ascii_graphic() && c != '('
}

impl WordList {
    /// Build a word list from `(name, tag)` pairs, assigning opcodes in order.
    pub fn from_pairs<I, N, T>(pairs: I) -> Result<Self, IsaError>
    where
        I: IntoIterator<Item = (N, T)>,
        N: Into<String>,
        T: Into<String>,
    {
        let mut words = Vec::new();
        let mut seen = HashSet::new();
        for (name, tag) in pairs {
            let name = name.into();
            if name.is_empty() || !name.chars().all(valid_name_char) {
                return Err(IsaError::InvalidName(name));
            }
            if name.len() > MAX_NAME_LEN {
                return Err(IsaError::NameTooLong(name));
            }
            if !seen.insert(name.clone()) {
                return Err(IsaError::Duplicate(name));
            }
            if words.len() >= OPCODE_LIMIT {
                return Err(IsaError::TooManyWords(words.len() + 1));
            }
            let opcode = words.len() as u8;
            words.push(Word { name, opcode, tag: tag.into() });
        }
        Ok(WordList { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn get(&self, opcode: u8) -> Option<&Word> {
        self.words.get(opcode as usize)
    }

    /// Longest name in the list (the check table row width).
    pub fn max_len(&self) -> usize {
        self.words.iter().map(|w| w.name.len()).max().unwrap_or(0)
    }

    /// Total number of characters over all names.
    pub fn total_chars(&self) -> usize {
        self.words.iter().map(|w| w.name.len()).sum()
    }

    /// Reference lookup by linear scan. Used to cross-check the generated tables.
    pub fn position(&self, name: &str) -> Option<u8> {
        self.words.iter().find(|w| w.name == name).map(|w| w.opcode)
    }

    pub fn opcode_of_tag(&self, tag: &str) -> Option<u8> {
        self.words.iter().find(|w| w.tag == tag).map(|w| w.opcode)
    }
}

/// Parse a word list document: a JSON array of `{"name": .., "tag": ..}` objects.
pub fn load_wordlist(config: &str) -> Result<WordList, IsaError> {
    let entries: Vec<WordEntry> =
        serde_json::from_str(config).map_err(|e| IsaError::Malformed(e.to_string()))?;
    WordList::from_pairs(entries.into_iter().map(|e| (e.name, e.tag)))
}

/// Tables for the shipped core word list, generated once per process.
pub fn default_tables() -> Arc<IsaTables> {
    static TABLES: OnceLock<Arc<IsaTables>> = OnceLock::new();
    TABLES
        .get_or_init(|| {
            let wl = load_wordlist(CORE_WORDS_JSON).expect("shipped word list is valid");
            Arc::new(IsaTables::generate(wl).expect("shipped word list builds"))
        })
        .clone()
}
