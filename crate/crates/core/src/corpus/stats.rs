use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LinkedSentence;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_sentences: usize,
    pub num_relations: usize,
    /// Bag size to number of relations with a bag of that size.
    pub bag_size_histogram: BTreeMap<usize, usize>,
    pub distinct_entity_pairs: usize,
}

pub fn corpus_stats(sentences: &[LinkedSentence]) -> CorpusStats {
    let mut bag_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    for s in sentences {
        if let Some(r) = &s.relation_id {
            *bag_sizes.entry(r).or_default() += 1;
        }
        if let Some(p) = s.entity_pair() {
            pairs.insert(p);
        }
    }
    let mut hist = BTreeMap::new();
    for size in bag_sizes.values() {
        *hist.entry(*size).or_default() += 1;
    }
    CorpusStats {
        num_sentences: sentences.len(),
        num_relations: bag_sizes.len(),
        bag_size_histogram: hist,
        distinct_entity_pairs: pairs.len(),
    }
}
