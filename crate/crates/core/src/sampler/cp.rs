use serde::{Deserialize, Serialize};

use super::{sample_positive_pair, weighted_pick, SamplerConfig};
use crate::corpus::{LinkedSentence, RelationBag};
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};
use crate::textproc::{apply_blank_mask, encode, format_cm, mlm_mask, EncodedInput, Vocab};

/// Positive pairs whose B-members double as in-batch negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveBatch {
    pub pairs: Vec<(EncodedInput, EncodedInput)>,
    pub relation_ids: Vec<String>,
    /// Corpus indices of the (A, B) sentences.
    pub sources: Vec<(usize, usize)>,
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Indices of the pairs whose B-members are negatives for pair `i`.
    pub fn negatives_for(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.pairs.len()).filter(move |&j| j != i)
    }
}

pub(crate) fn prepare(s: &LinkedSentence, cfg: &SamplerConfig, vocab: &Vocab, rng: &mut Rng) -> Result<EncodedInput> {
    let marked = apply_blank_mask(&format_cm(s), cfg.p_blank, rng)?;
    let enc = encode(&marked, vocab, cfg.max_len)?;
    Ok(if cfg.mlm_rate > 0.0 {
        mlm_mask(&enc, cfg.mlm_rate, vocab.len(), rng)
    } else {
        enc
    })
}

/// Builds batch `batch_index` from the stream `(cfg.seed, batch_index)`.
///
/// Draw order: for each pair, its relation (proportional to bag size among
/// bags with at least two sentences, without replacement when
/// `distinct_relations_in_batch`) and then its two sentences; afterwards,
/// pair by pair, A then B, the two blanking draws followed by the MLM draws.
pub fn build_cp_batch(
    corpus: &[LinkedSentence],
    bags: &RelationBag,
    cfg: &SamplerConfig,
    vocab: &Vocab,
    batch_index: u64,
) -> Result<ContrastiveBatch> {
    cfg.validate()?;
    let mut eligible: Vec<(&str, usize)> = bags
        .bags
        .iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(r, v)| (r.as_str(), v.len()))
        .collect();
    let needed = if cfg.distinct_relations_in_batch {
        cfg.batch_pairs
    } else {
        1
    };
    if eligible.len() < needed {
        return Err(Error::InsufficientRelations {
            needed,
            available: eligible.len(),
        });
    }

    let mut rng = rng::stream(cfg.seed, tag::CP_BATCH, batch_index);
    let mut relation_ids = Vec::with_capacity(cfg.batch_pairs);
    let mut sources = Vec::with_capacity(cfg.batch_pairs);
    for _ in 0..cfg.batch_pairs {
        let r = weighted_pick(eligible.iter().copied(), &mut rng)?;
        if cfg.distinct_relations_in_batch {
            eligible.retain(|(x, _)| *x != r);
        }
        sources.push(sample_positive_pair(bags, r, &mut rng)?);
        relation_ids.push(r.to_owned());
    }
    let mut pairs = Vec::with_capacity(cfg.batch_pairs);
    for &(a, b) in &sources {
        let ea = prepare(&corpus[a], cfg, vocab, &mut rng)?;
        let eb = prepare(&corpus[b], cfg, vocab, &mut rng)?;
        pairs.push((ea, eb));
    }
    Ok(ContrastiveBatch {
        pairs,
        relation_ids,
        sources,
    })
}
