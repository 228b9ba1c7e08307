//! The small end-to-end study: CP pre-training on half of the relations of a
//! synthetic corpus, then few-shot evaluation on the other half and
//! fine-tuning against a randomly initialized encoder.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate_fewshot, finetune, subsample_per_relation, FewshotConfig, FinetuneConfig};
use crate::corpus::{build_bags, filter_leakage, generate_synthetic, LinkedSentence, SyntheticSpec};
use crate::encoder::{init_params, EncoderConfig, ParamSet, Transformer};
use crate::error::{Error, Result};
use crate::objectives::{mlm_stage, pretrain_from, MlmStageConfig, Objective, OptimizerConfig, PretrainConfig};
use crate::rng::{self, tag};
use crate::sampler::SamplerConfig;
use crate::textproc::{InputSetting, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub relations: usize,
    pub templates: usize,
    pub fillers: usize,
    /// Sentences in each generated corpus.
    pub count: usize,
    /// Seeds the pre-training corpus; the downstream corpus uses `data_seed + 1`.
    pub data_seed: u64,
    pub model_seed: u64,
    /// Relations whose bags feed contrastive pre-training; the rest are
    /// held out for few-shot evaluation.
    pub pretrain_relations: Vec<String>,
    pub encoder: EncoderConfig,
    pub mlm_stage: MlmStageConfig,
    pub cp_steps: u64,
    pub sampler: SamplerConfig,
    pub cp_optimizer: OptimizerConfig,
    pub fewshot: FewshotConfig,
    pub low_resource_fraction: f64,
    pub finetune: FinetuneConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        let max_len = 32;
        ToyConfig {
            relations: 8,
            templates: 8,
            fillers: 40,
            count: 1600,
            data_seed: 7,
            model_seed: 1,
            pretrain_relations: ["born_in", "founded", "headquartered_in", "married"]
                .map(String::from)
                .to_vec(),
            encoder: EncoderConfig {
                hidden_dim: 64,
                layers: 2,
                heads: 4,
                ffn_dim: 128,
                max_len,
                ..Default::default()
            },
            mlm_stage: MlmStageConfig {
                steps: 2000,
                ..Default::default()
            },
            cp_steps: 2000,
            sampler: SamplerConfig {
                batch_pairs: 8,
                max_len,
                mlm_rate: 0.0,
                distinct_relations_in_batch: false,
                ..Default::default()
            },
            cp_optimizer: OptimizerConfig {
                lr: 3e-4,
                ..Default::default()
            },
            fewshot: FewshotConfig {
                n_way: 4,
                k_shot: 1,
                episodes: 2000,
                max_len,
                ..Default::default()
            },
            low_resource_fraction: 0.01,
            finetune: FinetuneConfig {
                epochs: 30,
                batch_size: 16,
                max_len,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitScores {
    pub fewshot: f64,
    pub low_resource: f64,
    pub context_mention: f64,
    pub only_mention: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyReport {
    pub cp: InitScores,
    pub random: InitScores,
    /// Few-shot accuracy right after the MLM stage, before any contrastive step.
    pub mlm_stage_only_fewshot: f64,
    pub pretrain_sentences: usize,
    pub dropped_for_leakage: usize,
    pub seconds: f64,
}

fn split_half(sentences: &[LinkedSentence], seed: u64) -> (Vec<LinkedSentence>, Vec<LinkedSentence>) {
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut rng::stream(seed, tag::SPLIT, 0));
    let (a, b) = order.split_at(sentences.len() / 2);
    let pick = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        ix.into_iter().map(|i| sentences[i].clone()).collect()
    };
    (pick(a), pick(b))
}

/// Runs the whole study. The downstream corpus is split in half for
/// fine-tuning and testing; pre-training sentences sharing an entity pair
/// with the test half are dropped first.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyReport> {
    let start = Instant::now();
    let spec = SyntheticSpec::toy(cfg.relations, cfg.templates, cfg.fillers, cfg.count);
    let (raw, _) = generate_synthetic(&spec, cfg.data_seed)?;
    let (downstream, _) = generate_synthetic(&spec, cfg.data_seed + 1)?;
    let (train, test) = split_half(&downstream, cfg.data_seed);

    let seen: HashSet<&str> = cfg.pretrain_relations.iter().map(String::as_str).collect();
    let relation = |s: &LinkedSentence| s.relation_id.as_deref().unwrap_or_default().to_owned();
    let (labeled, held): (Vec<_>, Vec<_>) = raw.iter().cloned().partition(|s| seen.contains(relation(s).as_str()));
    if labeled.is_empty() || held.is_empty() {
        return Err(Error::Config(
            "pre-training and held-out relations must both be non-empty".into(),
        ));
    }
    let test_pairs = test
        .iter()
        .filter_map(LinkedSentence::entity_pair)
        .map(|(h, t)| (h.to_owned(), t.to_owned()))
        .collect();
    let pre = filter_leakage(&labeled, &test_pairs);
    let bags = build_bags(&pre)?;

    let vocab = Vocab::from_corpora([raw.as_slice(), downstream.as_slice()]);
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        ..cfg.encoder.clone()
    };
    let fewshot = |p: &ParamSet| evaluate_fewshot(&encoder, p, &vocab, &held, &cfg.fewshot).map(|r| r.median);

    let random = init_params(&encoder, cfg.model_seed)?;
    let mut lm = random.clone();
    mlm_stage(
        &Transformer::new(&encoder)?,
        &mut lm,
        &raw,
        &vocab,
        &cfg.mlm_stage,
        cfg.model_seed,
    )?;
    let mlm_stage_only_fewshot = fewshot(&lm)?;
    let cp_cfg = PretrainConfig {
        objective: Objective::Cp,
        steps: cfg.cp_steps,
        seed: cfg.model_seed,
        sampler: cfg.sampler.clone(),
        encoder: encoder.clone(),
        optimizer: cfg.cp_optimizer.clone(),
        ..Default::default()
    };
    let cp = pretrain_from(lm, &pre, &bags, &vocab, &cp_cfg)?.params;

    let small = subsample_per_relation(&train, cfg.low_resource_fraction, cfg.model_seed)?;
    let score = |init: &ParamSet, data: &[LinkedSentence], setting: InputSetting| -> Result<f64> {
        let ft = FinetuneConfig {
            setting,
            ..cfg.finetune.clone()
        };
        let out = finetune(&encoder, init, &vocab, data, &[], &ft)?;
        Ok(out.classifier.evaluate(&vocab, &test, None)?.0)
    };
    let scores = |init: &ParamSet| -> Result<InitScores> {
        Ok(InitScores {
            fewshot: fewshot(init)?,
            low_resource: score(init, &small, InputSetting::ContextMention)?,
            context_mention: score(init, &train, InputSetting::ContextMention)?,
            only_mention: score(init, &train, InputSetting::OnlyMention)?,
        })
    };
    Ok(ToyReport {
        cp: scores(&cp)?,
        random: scores(&random)?,
        mlm_stage_only_fewshot,
        pretrain_sentences: pre.len(),
        dropped_for_leakage: labeled.len() - pre.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}
