//! Template-based corpus generator standing in for a Wikipedia-scale
//! distantly supervised corpus.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{LinkedSentence, SpanRecord, TripleStore};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const HEAD_SLOT: &str = "HEAD";
pub const TAIL_SLOT: &str = "TAIL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationTemplate {
    pub id: String,
    pub head_type: String,
    pub tail_type: String,
    /// Whitespace-tokenized patterns with standalone `HEAD` and `TAIL` slots.
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub relations: Vec<RelationTemplate>,
    /// Entity type to surface names. Names may span several tokens.
    pub entities: BTreeMap<String, Vec<String>>,
    pub count: usize,
}

const KEYWORDS: [(&str, &str, &str, &str); 8] = [
    ("born_in", "person", "city", "was born in"),
    ("died_in", "person", "city", "died in"),
    ("founded", "person", "organization", "founded"),
    ("works_for", "person", "organization", "works for"),
    ("headquartered_in", "organization", "city", "is headquartered in"),
    ("office_in", "organization", "city", "opened an office in"),
    ("married", "person", "person", "married"),
    ("mentored", "person", "person", "mentored"),
];

const FRAMES: [&str; 8] = [
    "HEAD {} TAIL .",
    "it is known that HEAD {} TAIL .",
    "HEAD , who {} TAIL , was mentioned in the report .",
    "in the story , HEAD {} TAIL .",
    "TAIL : HEAD {} it , sources say .",
    "reports confirm HEAD {} TAIL last year .",
    "according to the archive HEAD {} TAIL .",
    "TAIL was noted because HEAD {} it .",
];

const FIRST: [&str; 8] = ["alice", "bruno", "chen", "dara", "emil", "farah", "goran", "hana"];
const LAST: [&str; 5] = ["smith", "okafor", "larsen", "ito", "moreau"];
const SYL_A: [&str; 8] = ["var", "bel", "cor", "dun", "esk", "fal", "gor", "hal"];
const SYL_B: [&str; 5] = ["ona", "ith", "ado", "ugo", "enz"];

impl SyntheticSpec {
    /// Built-in desk corpus: up to 8 relations arranged so every
    /// (head type, tail type) signature is shared by two relations, each with
    /// up to 8 phrasings around a relation keyword, and `fillers` names per
    /// entity type (at most 40).
    pub fn toy(relations: usize, templates: usize, fillers: usize, count: usize) -> Self {
        let relations = relations.clamp(1, KEYWORDS.len());
        let templates = templates.clamp(1, FRAMES.len());
        let fillers = fillers.clamp(1, FIRST.len() * LAST.len());
        let rels = KEYWORDS[..relations]
            .iter()
            .map(|(id, h, t, kw)| RelationTemplate {
                id: (*id).to_owned(),
                head_type: (*h).to_owned(),
                tail_type: (*t).to_owned(),
                templates: FRAMES[..templates].iter().map(|f| f.replace("{}", kw)).collect(),
            })
            .collect();
        let grid = |a: &[&str], b: &[&str], f: &dyn Fn(&str, &str) -> String| -> Vec<String> {
            b.iter()
                .flat_map(|y| a.iter().map(move |x| (*x, *y)))
                .map(|(x, y)| f(x, y))
                .take(fillers)
                .collect()
        };
        let mut entities = BTreeMap::new();
        entities.insert("person".to_owned(), grid(&FIRST, &LAST, &|x, y| format!("{x} {y}")));
        entities.insert("city".to_owned(), grid(&SYL_A, &SYL_B, &|x, y| format!("{x}{y}")));
        entities.insert(
            "organization".to_owned(),
            grid(&SYL_A, &SYL_B, &|x, y| format!("{x}{y} corp")),
        );
        SyntheticSpec {
            relations: rels,
            entities,
            count,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("synthetic count must be at least 1".into()));
        }
        if self.relations.is_empty() {
            return Err(Error::Config("synthetic spec has no relations".into()));
        }
        for r in &self.relations {
            if r.templates.is_empty() {
                return Err(Error::Config(format!("relation {} has no templates", r.id)));
            }
            for t in &r.templates {
                for slot in [HEAD_SLOT, TAIL_SLOT] {
                    if t.split_whitespace().filter(|w| *w == slot).count() != 1 {
                        return Err(Error::Template {
                            relation: r.id.clone(),
                            placeholder: slot,
                            template: t.clone(),
                        });
                    }
                }
            }
            for ty in [&r.head_type, &r.tail_type] {
                if self.entities.get(ty).is_none_or(Vec::is_empty) {
                    return Err(Error::Config(format!("no entities of type {ty}")));
                }
            }
            if r.head_type == r.tail_type && self.entities[&r.head_type].len() < 2 {
                return Err(Error::Config(format!(
                    "relation {} needs two distinct {} entities",
                    r.id, r.head_type
                )));
            }
        }
        Ok(())
    }
}

fn entity_id(ty: &str, index: usize) -> String {
    format!("{ty}:{index}")
}

/// Generates `spec.count` labeled sentences plus the facts they express.
///
/// The first `min(count, |relations|)` sentences visit every relation once in
/// declaration order; the rest draw relations uniformly.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Vec<LinkedSentence>, TripleStore)> {
    spec.validate()?;
    let mut rng = rng::stream(seed, tag::SYNTHETIC, 0);
    let mut kg = TripleStore::new();
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let rel = if i < spec.relations.len() {
            &spec.relations[i]
        } else {
            spec.relations.choose(&mut rng).expect("non-empty")
        };
        let template = rel.templates.choose(&mut rng).expect("non-empty");
        let heads = &spec.entities[&rel.head_type];
        let tails = &spec.entities[&rel.tail_type];
        let h = rng.random_range(0..heads.len());
        let t = loop {
            let t = rng.random_range(0..tails.len());
            if rel.head_type != rel.tail_type || t != h {
                break t;
            }
        };

        let mut tokens = Vec::new();
        let (mut hs, mut ts) = (SpanRecord::default(), SpanRecord::default());
        for word in template.split_whitespace() {
            let (slot, name, ty, idx) = match word {
                HEAD_SLOT => (&mut hs, &heads[h], &rel.head_type, h),
                TAIL_SLOT => (&mut ts, &tails[t], &rel.tail_type, t),
                w => {
                    tokens.push(w.to_owned());
                    continue;
                }
            };
            slot.start = tokens.len();
            tokens.extend(name.split_whitespace().map(str::to_owned));
            slot.end = tokens.len();
            slot.id = Some(entity_id(ty, idx));
            slot.entity_type = Some(ty.clone());
        }
        let (hid, tid) = (hs.id.clone().unwrap(), ts.id.clone().unwrap());
        kg.insert(&hid, &rel.id, &tid);
        let s = LinkedSentence::new(tokens, hs, ts, Some(rel.id.clone())).map_err(|message| Error::InvalidRecord {
            record: format!("synthetic sentence {i}"),
            message,
        })?;
        out.push(s);
    }
    Ok((out, kg))
}
