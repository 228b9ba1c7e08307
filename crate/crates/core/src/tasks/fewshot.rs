use ndarray::Array1;
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::finetune::{argmax, model_inputs};
use super::metrics::median;
use super::report::EvalReport;
use super::Metric;
use crate::corpus::{build_bags, LinkedSentence, RelationBag};
use crate::encoder::{Encoder, EncoderConfig, Mode, ParamSet};
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};
use crate::textproc::{InputSetting, Vocab};

/// One N-way K-shot episode over a dataset, by sentence index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    /// Relation of each class, in class order.
    pub relations: Vec<String>,
    /// `n_way` lists of `k_shot` support indices.
    pub support: Vec<Vec<usize>>,
    /// Query index and gold class.
    pub queries: Vec<(usize, usize)>,
}

/// Draws an episode: `n_way` relations uniformly without replacement (in
/// name order before sampling), then each query's class uniformly, then per
/// class its supports and queries without replacement.
pub fn sample_episode(
    bags: &RelationBag,
    n_way: usize,
    k_shot: usize,
    queries: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    let relations: Vec<&str> = bags.relations().collect();
    if n_way == 0 || k_shot == 0 {
        return Err(Error::Config("n_way and k_shot must be positive".into()));
    }
    if relations.len() < n_way {
        return Err(Error::InsufficientRelations {
            needed: n_way,
            available: relations.len(),
        });
    }
    for r in &relations {
        let have = bags.get(r).len();
        if have < k_shot + 1 {
            return Err(Error::InsufficientData {
                relation: r.to_string(),
                needed: k_shot + 1,
                have,
            });
        }
    }
    let chosen: Vec<&str> = sample(rng, relations.len(), n_way)
        .into_iter()
        .map(|i| relations[i])
        .collect();
    let classes: Vec<usize> = (0..queries).map(|_| rng.random_range(0..n_way)).collect();
    let mut support = Vec::with_capacity(n_way);
    let mut per_class_queries = Vec::with_capacity(n_way);
    for (c, r) in chosen.iter().enumerate() {
        let members = bags.get(r);
        let q = classes.iter().filter(|&&x| x == c).count();
        if members.len() < k_shot + q {
            return Err(Error::InsufficientData {
                relation: r.to_string(),
                needed: k_shot + q,
                have: members.len(),
            });
        }
        let picked: Vec<usize> = sample(rng, members.len(), k_shot + q)
            .into_iter()
            .map(|j| members[j])
            .collect();
        support.push(picked[..k_shot].to_vec());
        per_class_queries.push(picked[k_shot..].to_vec());
    }
    let mut cursor = vec![0usize; n_way];
    let queries = classes
        .iter()
        .map(|&c| {
            let idx = per_class_queries[c][cursor[c]];
            cursor[c] += 1;
            (idx, c)
        })
        .collect();
    Ok(Episode {
        n_way,
        k_shot,
        relations: chosen.into_iter().map(String::from).collect(),
        support,
        queries,
    })
}

/// Class of each query: the prototype (mean support vector) with the
/// largest dot product, ties going to the lowest class index.
pub fn proto_classify(support: &[Vec<Array1<f64>>], queries: &[Array1<f64>]) -> Vec<usize> {
    let prototypes: Vec<Array1<f64>> = support
        .iter()
        .map(|vs| {
            let mut m = vs[0].clone();
            for v in &vs[1..] {
                m += v;
            }
            m / vs.len() as f64
        })
        .collect();
    queries
        .iter()
        .map(|q| {
            let scores: Vec<f64> = prototypes.iter().map(|p| q.dot(p)).collect();
            argmax(&scores)
        })
        .collect()
}

/// Query accuracy over `episodes` episodes, episode `i` drawn from stream
/// `(seed, EPISODE, i)`, given one representation per dataset sentence.
pub fn episode_accuracy(reprs: &[Array1<f64>], bags: &RelationBag, cfg: &FewshotConfig, seed: u64) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..cfg.episodes {
        let mut r = rng::stream(seed, tag::EPISODE, i);
        let ep = sample_episode(bags, cfg.n_way, cfg.k_shot, cfg.queries, &mut r)?;
        let support: Vec<Vec<Array1<f64>>> = ep
            .support
            .iter()
            .map(|s| s.iter().map(|&j| reprs[j].clone()).collect())
            .collect();
        let qs: Vec<Array1<f64>> = ep.queries.iter().map(|&(j, _)| reprs[j].clone()).collect();
        for (pred, &(_, gold)) in proto_classify(&support, &qs).into_iter().zip(&ep.queries) {
            correct += usize::from(pred == gold);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewshotConfig {
    pub n_way: usize,
    pub k_shot: usize,
    /// Queries per episode.
    pub queries: usize,
    pub episodes: u64,
    pub setting: InputSetting,
    pub max_len: usize,
    pub seeds: Vec<u64>,
}

impl Default for FewshotConfig {
    fn default() -> Self {
        FewshotConfig {
            n_way: 5,
            k_shot: 1,
            queries: 1,
            episodes: 1000,
            setting: InputSetting::ContextMention,
            max_len: 64,
            seeds: vec![42],
        }
    }
}

/// Inference-mode representation of every sentence.
pub fn represent_all(
    cfg: &EncoderConfig,
    params: &ParamSet,
    vocab: &Vocab,
    setting: InputSetting,
    max_len: usize,
    sentences: &[LinkedSentence],
) -> Result<Vec<Array1<f64>>> {
    let enc = Encoder::new(cfg)?;
    model_inputs(cfg, setting, max_len, vocab, sentences)?
        .iter()
        .map(|x| Ok(enc.represent(params, x, Mode::Inference)?.0))
        .collect()
}

/// Prototypical evaluation of an encoder: accuracy per seed over the
/// episode stream, and their median.
pub fn evaluate_fewshot(
    encoder: &EncoderConfig,
    params: &ParamSet,
    vocab: &Vocab,
    dataset: &[LinkedSentence],
    cfg: &FewshotConfig,
) -> Result<EvalReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("no evaluation seeds".into()));
    }
    let bags = build_bags(dataset)?;
    let reprs = represent_all(encoder, params, vocab, cfg.setting, cfg.max_len, dataset)?;
    let per_seed = cfg
        .seeds
        .iter()
        .map(|&s| episode_accuracy(&reprs, &bags, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        metric: Metric::Accuracy,
        median: median(&per_seed).expect("non-empty"),
        per_seed,
        seeds: cfg.seeds.clone(),
        episodes: Some(cfg.episodes),
    })
}
