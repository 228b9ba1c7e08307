use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::LinkedSentence;
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const BLANK: &str = "[BLANK]";
pub const E1: &str = "[E1]";
pub const E1_END: &str = "[/E1]";
pub const E2: &str = "[E2]";
pub const E2_END: &str = "[/E2]";
pub const SUBJ: &str = "[SUBJ]";
pub const OBJ: &str = "[OBJ]";

/// Reserved tokens in id order; they occupy ids 0..12 of every vocabulary.
pub const RESERVED: [&str; 12] = [PAD, UNK, CLS, SEP, MASK, BLANK, E1, E1_END, E2, E2_END, SUBJ, OBJ];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const MASK_ID: usize = 4;
pub const BLANK_ID: usize = 5;
pub const E1_ID: usize = 6;
pub const E1_END_ID: usize = 7;
pub const E2_ID: usize = 8;
pub const E2_END_ID: usize = 9;

/// Type token for an entity type, e.g. `person` -> `[person]`.
pub fn type_token(entity_type: &str) -> String {
    format!("[{entity_type}]")
}

/// Dense token/id mapping with the reserved tokens first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from reserved tokens followed by `tokens` in order,
    /// skipping duplicates.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            v.push(t);
        }
        for t in tokens {
            v.push(t.as_ref());
        }
        v
    }

    /// Every word of the corpora (sorted) followed by one type token per
    /// entity type seen (sorted).
    pub fn from_corpora<'a>(corpora: impl IntoIterator<Item = &'a [LinkedSentence]>) -> Self {
        let mut words = BTreeSet::new();
        let mut types = BTreeSet::new();
        for corpus in corpora {
            for s in corpus {
                words.extend(s.tokens.iter().map(String::as_str));
                for span in [&s.head, &s.tail] {
                    if let Some(t) = &span.entity_type {
                        types.insert(type_token(t));
                    }
                }
            }
        }
        Self::from_tokens(words.into_iter().map(str::to_owned).chain(types))
    }

    fn push(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_owned(), self.tokens.len());
            self.tokens.push(token.to_owned());
        }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        for (i, want) in RESERVED.iter().enumerate() {
            if lines.get(i) != Some(want) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected reserved token {want}"),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, l) in lines.iter().enumerate() {
            if l.is_empty() || !seen.insert(*l) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("empty or duplicate token {l:?}"),
                });
            }
        }
        Ok(Self::from_tokens(&lines[RESERVED.len()..]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the vocabulary file contents.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocab::from_tokens(["hello", "[E1]", "world"]);
        for (i, t) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(t), i);
        }
        assert_eq!(v.len(), 14);
        assert_eq!(v.id("hello"), 12);
        assert_eq!(v.id("nope"), UNK_ID);
        assert_eq!((CLS_ID, E2_END_ID, BLANK_ID), (v.id(CLS), v.id(E2_END), v.id(BLANK)));
    }

    #[test]
    fn file_roundtrip() {
        let v = Vocab::from_tokens(["a", "b", "[person]"]);
        let back = Vocab::parse(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert!(Vocab::parse("a\nb\n").is_err());
        assert!(Vocab::parse(&format!("{}a\na\n", Vocab::from_tokens::<_, &str>([]).to_text())).is_err());
    }
}
