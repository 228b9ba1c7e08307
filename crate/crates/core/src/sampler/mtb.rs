use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cp::prepare;
use super::SamplerConfig;
use crate::corpus::LinkedSentence;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::textproc::EncodedInput;

type Pair = (String, String);

/// Ordered entity pair to the sentences mentioning it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityPairIndex {
    pub pairs: BTreeMap<Pair, Vec<usize>>,
    by_entity: BTreeMap<String, BTreeSet<Pair>>,
    linked: Vec<usize>,
}

impl EntityPairIndex {
    pub fn build(corpus: &[LinkedSentence]) -> Self {
        let mut idx = EntityPairIndex::default();
        for (i, s) in corpus.iter().enumerate() {
            let Some((h, t)) = s.entity_pair() else { continue };
            let pair = (h.to_owned(), t.to_owned());
            idx.pairs.entry(pair.clone()).or_default().push(i);
            for e in [h, t] {
                idx.by_entity.entry(e.to_owned()).or_default().insert(pair.clone());
            }
            idx.linked.push(i);
        }
        idx
    }

    fn pair_of(&self, corpus: &[LinkedSentence], i: usize) -> Pair {
        let (h, t) = corpus[i].entity_pair().expect("indexed sentences are linked");
        (h.to_owned(), t.to_owned())
    }

    /// Pairs sharing exactly one entity with `pair`.
    fn hard_negatives(&self, pair: &Pair) -> Vec<&Pair> {
        let mine: BTreeSet<&str> = [pair.0.as_str(), pair.1.as_str()].into();
        let mut out: BTreeSet<&Pair> = BTreeSet::new();
        for e in &mine {
            for p in self.by_entity.get(*e).into_iter().flatten() {
                let theirs: BTreeSet<&str> = [p.0.as_str(), p.1.as_str()].into();
                if mine.intersection(&theirs).count() == 1 {
                    out.insert(p);
                }
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtbExample {
    pub a: EncodedInput,
    pub b: EncodedInput,
    /// 1 when both sentences mention the same ordered entity pair.
    pub label: u8,
    pub sources: (usize, usize),
}

/// `ceil(n/2)` positives then `floor(n/2)` negatives for `n = cfg.batch_pairs`.
///
/// A positive takes two sentences of a uniformly chosen entity pair with at
/// least two mentions. A negative anchors on a uniform sentence and pairs it
/// with a sentence whose entity pair shares exactly one entity with it when
/// such a pair exists, otherwise with any sentence of a different pair.
pub fn build_mtb_batch(
    corpus: &[LinkedSentence],
    index: &EntityPairIndex,
    cfg: &SamplerConfig,
    vocab: &crate::textproc::Vocab,
    batch_index: u64,
) -> Result<Vec<MtbExample>> {
    cfg.validate()?;
    let multi: Vec<&Vec<usize>> = index.pairs.values().filter(|v| v.len() >= 2).collect();
    if multi.is_empty() {
        return Err(Error::InsufficientData {
            relation: "<any entity pair>".into(),
            needed: 2,
            have: index.pairs.values().map(Vec::len).max().unwrap_or(0),
        });
    }
    let positives = cfg.batch_pairs.div_ceil(2);
    let negatives = cfg.batch_pairs / 2;
    if negatives > 0 && index.pairs.len() < 2 {
        return Err(Error::InsufficientData {
            relation: "<distinct entity pairs>".into(),
            needed: 2,
            have: index.pairs.len(),
        });
    }

    let mut rng = rng::stream(cfg.seed, tag::MTB_BATCH, batch_index);
    let mut picks = Vec::with_capacity(cfg.batch_pairs);
    for _ in 0..positives {
        let bag = multi.choose(&mut rng).expect("non-empty");
        let i = rng.random_range(0..bag.len());
        let mut j = rng.random_range(0..bag.len() - 1);
        if j >= i {
            j += 1;
        }
        picks.push((bag[i], bag[j], 1u8));
    }
    for _ in 0..negatives {
        let a = *index.linked.choose(&mut rng).expect("non-empty");
        let pa = index.pair_of(corpus, a);
        let hard = index.hard_negatives(&pa);
        let b = if let Some(p) = hard.choose(&mut rng) {
            *index.pairs[*p].choose(&mut rng).expect("non-empty")
        } else {
            loop {
                let b = *index.linked.choose(&mut rng).expect("non-empty");
                if index.pair_of(corpus, b) != pa {
                    break b;
                }
            }
        };
        picks.push((a, b, 0u8));
    }
    picks
        .into_iter()
        .map(|(a, b, label)| {
            Ok(MtbExample {
                a: prepare(&corpus[a], cfg, vocab, &mut rng)?,
                b: prepare(&corpus[b], cfg, vocab, &mut rng)?,
                label,
                sources: (a, b),
            })
        })
        .collect()
}
