//! Sentence-level data model and the line-delimited JSON corpus format.
//!
//! Each corpus line is one object:
//!
//! ```text
//! {"tokens":[...],"h":{"start":0,"end":1,"id":"Q193701","type":"organization"},
//!  "t":{"start":4,"end":6,"id":"Q317521"},"relation":"P112"}
//! ```
//!
//! Spans are half-open token ranges. `id`, `type` and `relation` are optional.

mod labeling;
mod stats;
mod synthetic;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use labeling::{
    assign_relations, build_bags, filter_leakage, filter_leakage_with, load_test_pairs, LabelingCounts, RelationBag,
    TripleStore,
};
pub use stats::{corpus_stats, CorpusStats};
pub use synthetic::{generate_synthetic, RelationTemplate, SyntheticSpec};

/// A mention of an entity inside a tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kg_id: Option<String>,
    pub entity_type: Option<String>,
    pub surface: String,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// A tokenized sentence with its head and tail mentions and, once labeled,
/// the relation holding between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedSentence {
    pub tokens: Vec<String>,
    pub head: EntitySpan,
    pub tail: EntitySpan,
    pub relation_id: Option<String>,
}

/// Bare span description used to build a [`LinkedSentence`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
}

impl SpanRecord {
    pub fn new(start: usize, end: usize) -> Self {
        SpanRecord {
            start,
            end,
            ..Default::default()
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_type(mut self, ty: impl Into<String>) -> Self {
        self.entity_type = Some(ty.into());
        self
    }
}

/// One corpus line as it appears on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    tokens: Vec<String>,
    h: SpanRecord,
    t: SpanRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation: Option<String>,
}

impl LinkedSentence {
    /// Validates spans against the tokens and fills in mention surfaces.
    pub fn new(
        tokens: Vec<String>,
        head: SpanRecord,
        tail: SpanRecord,
        relation_id: Option<String>,
    ) -> std::result::Result<Self, String> {
        if tokens.is_empty() {
            return Err("empty token list".into());
        }
        let head = make_span(&tokens, head, "head")?;
        let tail = make_span(&tokens, tail, "tail")?;
        if head.overlaps(&tail) {
            return Err(format!(
                "overlapping spans [{}, {}) and [{}, {})",
                head.start, head.end, tail.start, tail.end
            ));
        }
        Ok(LinkedSentence {
            tokens,
            head,
            tail,
            relation_id,
        })
    }

    /// Ordered (head, tail) KG id pair, when both mentions are linked.
    pub fn entity_pair(&self) -> Option<(&str, &str)> {
        Some((self.head.kg_id.as_deref()?, self.tail.kg_id.as_deref()?))
    }

    pub fn with_relation(&self, relation: impl Into<String>) -> Self {
        let mut s = self.clone();
        s.relation_id = Some(relation.into());
        s
    }

    fn to_record(&self) -> Record {
        let span = |e: &EntitySpan| SpanRecord {
            start: e.start,
            end: e.end,
            id: e.kg_id.clone(),
            entity_type: e.entity_type.clone(),
        };
        Record {
            tokens: self.tokens.clone(),
            h: span(&self.head),
            t: span(&self.tail),
            relation: self.relation_id.clone(),
        }
    }
}

fn make_span(tokens: &[String], rec: SpanRecord, role: &str) -> std::result::Result<EntitySpan, String> {
    if rec.end <= rec.start {
        return Err(format!("{role}: empty span [{}, {})", rec.start, rec.end));
    }
    if rec.end > tokens.len() {
        return Err(format!(
            "{role}: span [{}, {}) out of bounds for {} tokens",
            rec.start,
            rec.end,
            tokens.len()
        ));
    }
    Ok(EntitySpan {
        surface: tokens[rec.start..rec.end].join(" "),
        start: rec.start,
        end: rec.end,
        kg_id: rec.id,
        entity_type: rec.entity_type,
    })
}

/// Corpus layouts understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusSchema {
    /// Pre-linked JSONL, one sentence per line.
    #[default]
    LinkedJsonl,
}

/// Parses a corpus from any buffered reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, _schema: CorpusSchema) -> Result<Vec<LinkedSentence>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let sentence =
            LinkedSentence::new(rec.tokens, rec.h, rec.t, rec.relation).map_err(|message| Error::InvalidRecord {
                record: format!("line {lineno}"),
                message,
            })?;
        out.push(sentence);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, schema: CorpusSchema) -> Result<Vec<LinkedSentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), schema)
}

pub fn write_corpus<W: Write>(mut writer: W, sentences: &[LinkedSentence]) -> Result<()> {
    for s in sentences {
        serde_json::to_writer(&mut writer, &s.to_record())?;
        writer.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, sentences: &[LinkedSentence]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(&mut w, sentences)?;
    w.flush().map_err(|e| Error::io(path, e))
}
