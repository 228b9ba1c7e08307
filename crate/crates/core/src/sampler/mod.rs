//! Training-pair generation: relation-proportional positive pairs for the
//! contrastive objective and same-entity-pair classification batches for the
//! MTB baseline.

mod cp;
mod mtb;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationBag;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub use cp::{build_cp_batch, ContrastiveBatch};
pub use mtb::{build_mtb_batch, EntityPairIndex, MtbExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Pairs per batch.
    pub batch_pairs: usize,
    pub p_blank: f64,
    pub max_len: usize,
    pub seed: u64,
    pub distinct_relations_in_batch: bool,
    /// Masked-language-model selection rate; 0 disables masking.
    pub mlm_rate: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            batch_pairs: 8,
            p_blank: 0.7,
            max_len: 64,
            seed: 0,
            distinct_relations_in_batch: true,
            mlm_rate: 0.15,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_pairs == 0 {
            return Err(Error::Config("batch_pairs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_blank) || !(0.0..=1.0).contains(&self.mlm_rate) {
            return Err(Error::Config("p_blank and mlm_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Draws a relation with probability proportional to its bag size.
pub fn sample_relation<'a>(bags: &'a RelationBag, rng: &mut Rng) -> Result<&'a str> {
    weighted_pick(bags.bags.iter().map(|(r, v)| (r.as_str(), v.len())), rng)
}

pub(crate) fn weighted_pick<'a, I>(items: I, rng: &mut Rng) -> Result<&'a str>
where
    I: Iterator<Item = (&'a str, usize)> + Clone,
{
    let total: usize = items.clone().map(|(_, w)| w).sum();
    if total == 0 {
        return Err(Error::EmptyBags);
    }
    let mut u = rng.random_range(0..total);
    for (r, w) in items {
        if u < w {
            return Ok(r);
        }
        u -= w;
    }
    unreachable!("u < total")
}

/// Two distinct sentence indices drawn uniformly from the relation's bag, in
/// random order.
pub fn sample_positive_pair(bags: &RelationBag, relation: &str, rng: &mut Rng) -> Result<(usize, usize)> {
    let bag = bags.get(relation);
    if bag.len() < 2 {
        return Err(Error::DegenerateBag {
            relation: relation.to_owned(),
            size: bag.len(),
        });
    }
    let i = rng.random_range(0..bag.len());
    let mut j = rng.random_range(0..bag.len() - 1);
    if j >= i {
        j += 1;
    }
    Ok((bag[i], bag[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::collections::{BTreeMap, HashMap};

    fn bags(spec: &[(&str, usize)]) -> RelationBag {
        let mut next = 0;
        let mut b = BTreeMap::new();
        for (r, n) in spec {
            b.insert((*r).to_owned(), (next..next + n).collect());
            next += n;
        }
        RelationBag { bags: b }
    }

    #[test]
    fn single_relation_always() {
        let b = bags(&[("only", 3)]);
        let mut r = rng::stream(0, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_relation(&b, &mut r).unwrap(), "only");
        }
    }

    #[test]
    fn proportional_three_to_one() {
        let b = bags(&[("r1", 3), ("r2", 1), ("zero", 0)]);
        let mut r = rng::stream(1, 0, 0);
        let mut hits = 0;
        for _ in 0..100_000 {
            match sample_relation(&b, &mut r).unwrap() {
                "r1" => hits += 1,
                "zero" => panic!("empty bag sampled"),
                _ => {}
            }
        }
        let p = hits as f64 / 100_000.0;
        assert!((0.74..=0.76).contains(&p), "{p}");
    }

    #[test]
    fn empty_bags_error() {
        let mut r = rng::stream(1, 0, 0);
        assert!(matches!(
            sample_relation(&RelationBag::default(), &mut r),
            Err(Error::EmptyBags)
        ));
        assert!(matches!(
            sample_relation(&bags(&[("a", 0)]), &mut r),
            Err(Error::EmptyBags)
        ));
    }

    #[test]
    fn pair_of_two_is_fixed() {
        let b = bags(&[("r", 2)]);
        let mut r = rng::stream(2, 0, 0);
        let mut orders = HashMap::new();
        for _ in 0..200 {
            let p = sample_positive_pair(&b, "r", &mut r).unwrap();
            assert!(p == (0, 1) || p == (1, 0));
            *orders.entry(p).or_insert(0) += 1;
        }
        assert_eq!(orders.len(), 2);
    }

    #[test]
    fn pairs_of_four_are_uniform() {
        let b = bags(&[("r", 4)]);
        let mut r = rng::stream(3, 0, 0);
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for _ in 0..60_000 {
            let (a, c) = sample_positive_pair(&b, "r", &mut r).unwrap();
            assert_ne!(a, c);
            *counts.entry((a.min(c), a.max(c))).or_default() += 1;
        }
        // exhaustive enumeration: C(4,2) unordered pairs
        let expected: Vec<(usize, usize)> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
        assert_eq!(expected.len(), 6);
        for pair in expected {
            let f = counts[&pair] as f64 / 60_000.0;
            assert!((f - 1.0 / 6.0).abs() <= 0.02, "{pair:?} {f}");
        }
    }

    #[test]
    fn degenerate_bag() {
        let b = bags(&[("r", 1)]);
        let err = sample_positive_pair(&b, "r", &mut rng::stream(0, 0, 0)).unwrap_err();
        assert!(err.to_string().contains("degenerate bag"));
    }
}
