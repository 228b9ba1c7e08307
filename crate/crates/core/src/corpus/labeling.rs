use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LinkedSentence;
use crate::error::{Error, Result};

/// Knowledge graph facts, `(head, relation, tail)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    triples: BTreeSet<(String, String, String)>,
    relation_counts: BTreeMap<String, usize>,
    by_pair: BTreeMap<(String, String), BTreeSet<String>>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a fact; returns false if it was already present.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let key = (head.to_owned(), relation.to_owned(), tail.to_owned());
        if !self.triples.insert(key) {
            return false;
        }
        *self.relation_counts.entry(relation.to_owned()).or_default() += 1;
        self.by_pair
            .entry((head.to_owned(), tail.to_owned()))
            .or_default()
            .insert(relation.to_owned());
        true
    }

    pub fn contains(&self, head: &str, relation: &str, tail: &str) -> bool {
        self.triples
            .contains(&(head.to_owned(), relation.to_owned(), tail.to_owned()))
    }

    /// Relations linking the ordered pair, sorted by id.
    pub fn relations_between(&self, head: &str, tail: &str) -> impl Iterator<Item = &str> {
        self.by_pair
            .get(&(head.to_owned(), tail.to_owned()))
            .into_iter()
            .flatten()
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn relation_counts(&self) -> &BTreeMap<String, usize> {
        &self.relation_counts
    }

    /// Fraction of all triples carrying `relation`.
    pub fn proportion(&self, relation: &str) -> f64 {
        if self.triples.is_empty() {
            return 0.0;
        }
        self.relation_counts.get(relation).copied().unwrap_or(0) as f64 / self.triples.len() as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.triples
            .iter()
            .map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str()))
    }

    /// Parses `head<TAB>relation<TAB>tail` lines.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut kg = TripleStore::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected head<TAB>relation<TAB>tail".into(),
                });
            }
            kg.insert(fields[0], fields[1], fields[2]);
        }
        Ok(kg)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect()
    }
}

impl<'a> FromIterator<(&'a str, &'a str, &'a str)> for TripleStore {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str, &'a str)>>(iter: I) -> Self {
        let mut kg = TripleStore::new();
        for (h, r, t) in iter {
            kg.insert(h, r, t);
        }
        kg
    }
}

/// Bookkeeping returned by [`assign_relations`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingCounts {
    /// Input sentences whose pair matched no fact.
    pub dropped: usize,
    /// Extra copies emitted for pairs matching more than one relation.
    pub duplicated: usize,
    /// Input sentences lacking a KG id on either mention.
    pub skipped_unlinked: usize,
}

/// Distant supervision: labels each sentence with every relation its ordered
/// entity pair holds in `kg`, one copy per relation.
pub fn assign_relations(sentences: &[LinkedSentence], kg: &TripleStore) -> (Vec<LinkedSentence>, LabelingCounts) {
    let mut counts = LabelingCounts::default();
    let mut out = Vec::with_capacity(sentences.len());
    for s in sentences {
        let Some((h, t)) = s.entity_pair() else {
            counts.skipped_unlinked += 1;
            continue;
        };
        let before = out.len();
        out.extend(kg.relations_between(h, t).map(|r| s.with_relation(r)));
        match out.len() - before {
            0 => counts.dropped += 1,
            k => counts.duplicated += k - 1,
        }
    }
    (out, counts)
}

/// Relation id to sentence indices, in corpus order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationBag {
    pub bags: BTreeMap<String, Vec<usize>>,
}

impl RelationBag {
    pub fn get(&self, relation: &str) -> &[usize] {
        self.bags.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.bags.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.bags.keys().map(String::as_str)
    }
}

pub fn build_bags(sentences: &[LinkedSentence]) -> Result<RelationBag> {
    let mut bags: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        let r = s.relation_id.as_ref().ok_or(Error::Unlabeled(i))?;
        bags.entry(r.clone()).or_default().push(i);
    }
    Ok(RelationBag { bags })
}

/// Drops every sentence whose ordered (head, tail) pair is in `test_pairs`.
pub fn filter_leakage(sentences: &[LinkedSentence], test_pairs: &HashSet<(String, String)>) -> Vec<LinkedSentence> {
    filter_leakage_with(sentences, test_pairs, false)
}

/// As [`filter_leakage`]; with `symmetric` the reversed pair also excludes.
pub fn filter_leakage_with(
    sentences: &[LinkedSentence],
    test_pairs: &HashSet<(String, String)>,
    symmetric: bool,
) -> Vec<LinkedSentence> {
    let leaks = |h: &str, t: &str| {
        let hit = |a: &str, b: &str| test_pairs.contains(&(a.to_owned(), b.to_owned()));
        hit(h, t) || (symmetric && hit(t, h))
    };
    sentences
        .iter()
        .filter(|s| !s.entity_pair().is_some_and(|(h, t)| leaks(h, t)))
        .cloned()
        .collect()
}

/// Reads a `head<TAB>tail` exclusion list.
pub fn load_test_pairs(path: impl AsRef<Path>) -> Result<HashSet<(String, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>()[..] {
            [h, t] if !h.is_empty() && !t.is_empty() => {
                pairs.insert((h.to_owned(), t.to_owned()));
            }
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected head<TAB>tail".into(),
                })
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SpanRecord;

    fn sent(h: &str, t: &str, rel: Option<&str>) -> LinkedSentence {
        let tokens = ["x", "y", "z"].map(String::from).to_vec();
        LinkedSentence::new(
            tokens,
            SpanRecord::new(0, 1).with_id(h),
            SpanRecord::new(2, 3).with_id(t),
            rel.map(String::from),
        )
        .unwrap()
    }

    #[test]
    fn single_match_labels() {
        let kg: TripleStore = [("Q193701", "P112", "Q317521")].into_iter().collect();
        let (out, c) = assign_relations(&[sent("Q193701", "Q317521", None)], &kg);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].relation_id.as_deref(), Some("P112"));
        assert_eq!(c, LabelingCounts::default());
    }

    #[test]
    fn multi_match_duplicates() {
        let kg: TripleStore = [("A", "P112", "B"), ("A", "P169", "B"), ("B", "P1", "A")]
            .into_iter()
            .collect();
        let (out, c) = assign_relations(&[sent("A", "B", None)], &kg);
        // brute force over every fact
        let expected: Vec<&str> = kg
            .iter()
            .filter(|(h, _, t)| *h == "A" && *t == "B")
            .map(|(_, r, _)| r)
            .collect();
        let got: Vec<&str> = out.iter().map(|s| s.relation_id.as_deref().unwrap()).collect();
        assert_eq!(got, expected);
        assert_eq!(c.duplicated, 1);
    }

    #[test]
    fn unmatched_and_unlinked_are_counted() {
        let kg: TripleStore = [("A", "P1", "B")].into_iter().collect();
        let mut unlinked = sent("A", "B", None);
        unlinked.tail.kg_id = None;
        let (out, c) = assign_relations(&[sent("C", "D", None), unlinked], &kg);
        assert!(out.is_empty());
        assert_eq!(c.dropped, 1);
        assert_eq!(c.skipped_unlinked, 1);
    }

    #[test]
    fn bags_group_in_order() {
        let c = vec![
            sent("a", "b", Some("P112")),
            sent("c", "d", Some("P112")),
            sent("e", "f", Some("P169")),
        ];
        let bags = build_bags(&c).unwrap();
        assert_eq!(bags.get("P112"), &[0, 1]);
        assert_eq!(bags.get("P169"), &[2]);
        assert!(build_bags(&[]).unwrap().is_empty());
        assert!(matches!(build_bags(&[sent("a", "b", None)]), Err(Error::Unlabeled(0))));
    }

    #[test]
    fn leak_filter_is_ordered() {
        let mut corpus: Vec<_> = (0..7).map(|i| sent(&format!("e{i}"), "z", Some("r"))).collect();
        for i in [1, 4, 6] {
            corpus.insert(i, sent("A", "B", Some("r")));
        }
        assert_eq!(corpus.len(), 10);
        let pairs: HashSet<_> = [("A".to_owned(), "B".to_owned())].into_iter().collect();
        let kept = filter_leakage(&corpus, &pairs);
        assert_eq!(kept.len(), 7);

        let reversed = vec![sent("B", "A", None)];
        assert_eq!(filter_leakage(&reversed, &pairs).len(), 1);
        assert!(filter_leakage_with(&reversed, &pairs, true).is_empty());
        assert_eq!(filter_leakage(&corpus, &HashSet::new()), corpus);
    }

    #[test]
    fn tsv_roundtrip_and_counts() {
        let kg = TripleStore::parse_tsv("a\tr1\tb\na\tr1\tb\nc\tr2\td\n").unwrap();
        assert_eq!(kg.len(), 2);
        assert_eq!(kg.relation_counts()["r1"], 1);
        assert_eq!(TripleStore::parse_tsv(&kg.to_tsv()).unwrap(), kg);
        assert!((kg.proportion("r2") - 0.5).abs() < 1e-12);
        assert!(TripleStore::parse_tsv("a\tb\n").is_err());
    }
}
