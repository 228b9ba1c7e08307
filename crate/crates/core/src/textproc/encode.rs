use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::blank::marker_regions;
use super::vocab::{Vocab, CLS, E1_ID, E2_ID, MASK_ID, PAD_ID, RESERVED, SEP};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fixed-length id sequence ready for the encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    pub e1_pos: usize,
    pub e2_pos: usize,
    /// Original id at MLM-selected positions.
    pub mlm_labels: Vec<Option<usize>>,
}

impl EncodedInput {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of unpadded positions. Padding is always a suffix.
    pub fn content_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn num_mlm_targets(&self) -> usize {
        self.mlm_labels.iter().flatten().count()
    }

    /// Checks the structural invariants against a vocabulary size.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let l = self.ids.len();
        if self.attention_mask.len() != l || self.mlm_labels.len() != l {
            return Err(Error::Shape("ids, mask and labels differ in length".into()));
        }
        let n = self.content_len();
        if n < 2 || self.attention_mask[..n].iter().any(|&m| m != 1) {
            return Err(Error::Shape("attention mask is not a non-empty prefix".into()));
        }
        if self.ids[n..].iter().any(|&i| i != PAD_ID) {
            return Err(Error::Shape("masked position holds a non-pad id".into()));
        }
        if let Some(&bad) = self.ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::LabelRange {
                label: bad,
                vocab: vocab_size,
            });
        }
        if self.e1_pos >= n || self.e2_pos >= n || self.ids[self.e1_pos] != E1_ID || self.ids[self.e2_pos] != E2_ID {
            return Err(Error::Markers("entity positions do not point at [E1]/[E2]".into()));
        }
        Ok(())
    }
}

fn is_structural(t: &str) -> bool {
    RESERVED[2..4].contains(&t) || RESERVED[6..10].contains(&t)
}

/// Maps a marked token list to ids, truncating to `max_len` without ever
/// losing `[CLS]`, `[SEP]` or a marker. When the list is too long, context
/// outside the marker regions is dropped from the right first; mention
/// tokens go only if that is not enough, and every mention keeps at least
/// one token.
pub fn encode(tokens: &[String], vocab: &Vocab, max_len: usize) -> Result<EncodedInput> {
    if max_len < 7 {
        return Err(Error::TooShort { max_len });
    }
    if tokens.first().map(String::as_str) != Some(CLS) || tokens.last().map(String::as_str) != Some(SEP) {
        return Err(Error::Markers("input must start with [CLS] and end with [SEP]".into()));
    }
    let regions = marker_regions(tokens)?;
    let interior = |i: usize| regions.iter().position(|(o, c)| *o < i && i < *c);

    let mut keep = vec![true; tokens.len()];
    let mut kept = tokens.len();
    let mut interior_kept = regions.map(|(o, c)| c - o - 1);
    let last = tokens.len() - 1;
    while kept > max_len {
        let context = (1..last)
            .rev()
            .find(|&i| keep[i] && !is_structural(&tokens[i]) && interior(i).is_none());
        let victim = context.or_else(|| {
            (1..last)
                .rev()
                .find(|&i| keep[i] && interior(i).is_some_and(|r| interior_kept[r] > 1))
        });
        let Some(i) = victim else {
            return Err(Error::TooShort { max_len });
        };
        if let Some(r) = interior(i) {
            interior_kept[r] -= 1;
        }
        keep[i] = false;
        kept -= 1;
    }

    let mut ids = Vec::with_capacity(max_len);
    for (t, _) in tokens.iter().zip(&keep).filter(|(_, k)| **k) {
        ids.push(vocab.id(t));
    }
    let e1_pos = ids.iter().position(|&i| i == E1_ID).expect("marker kept");
    let e2_pos = ids.iter().position(|&i| i == E2_ID).expect("marker kept");
    let mut attention_mask = vec![1u8; ids.len()];
    attention_mask.resize(max_len, 0);
    ids.resize(max_len, PAD_ID);
    Ok(EncodedInput {
        ids,
        attention_mask,
        e1_pos,
        e2_pos,
        mlm_labels: vec![None; max_len],
    })
}

/// BERT-style masking over non-reserved content positions: each is selected
/// with probability `rate`; a selected token becomes `[MASK]` (80%), a
/// uniformly drawn non-reserved token (10%) or stays as is (10%).
///
/// Draws per candidate, left to right: one selection uniform, then for
/// selected positions one split uniform and, for random replacement, one
/// token index.
pub fn mlm_mask(enc: &EncodedInput, rate: f64, vocab_size: usize, rng: &mut Rng) -> EncodedInput {
    let mut out = enc.clone();
    let n = enc.content_len();
    for pos in 0..n {
        let id = enc.ids[pos];
        if Vocab::is_reserved(id) {
            continue;
        }
        if rng.random::<f64>() >= rate {
            continue;
        }
        out.mlm_labels[pos] = Some(id);
        let u: f64 = rng.random();
        if u < 0.8 {
            out.ids[pos] = MASK_ID;
        } else if u < 0.9 && vocab_size > RESERVED.len() {
            out.ids[pos] = rng.random_range(RESERVED.len()..vocab_size);
        }
    }
    out
}
