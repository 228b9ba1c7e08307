use std::collections::BTreeMap;

use rand::seq::index::sample;

use crate::corpus::LinkedSentence;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Number kept out of `n`: `round(fraction * n)` with halves rounded away
/// from zero, and never fewer than one.
pub fn kept_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Uniformly keeps [`kept_count`] sentences of every relation. Relations are
/// visited in name order, each drawing from stream `(seed, SUBSAMPLE, 0)`;
/// the result preserves the input order.
pub fn subsample_per_relation(train: &[LinkedSentence], fraction: f64, seed: u64) -> Result<Vec<LinkedSentence>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let mut by_relation: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in train.iter().enumerate() {
        let r = s.relation_id.as_deref().ok_or(Error::Unlabeled(i))?;
        by_relation.entry(r).or_default().push(i);
    }
    let mut rng = rng::stream(seed, tag::SUBSAMPLE, 0);
    let mut keep = vec![false; train.len()];
    for members in by_relation.values() {
        let k = kept_count(members.len(), fraction);
        for j in sample(&mut rng, members.len(), k) {
            keep[members[j]] = true;
        }
    }
    Ok(train
        .iter()
        .zip(keep)
        .filter(|&(_, k)| k)
        .map(|(s, _)| s.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(kept_count(50, 0.1), 5);
        assert_eq!(kept_count(100, 0.01), 1);
        assert_eq!(kept_count(3, 0.01), 1);
        assert_eq!(kept_count(25, 0.1), 3);
        assert_eq!(kept_count(7, 1.0), 7);
    }
}
