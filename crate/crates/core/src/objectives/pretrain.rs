use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::{batch_cp_loss, batch_mtb_loss, BatchOptions, LossBreakdown};
use super::mlm::ensure_mlm_head;
use super::mlm_stage::{mlm_stage, MlmStageConfig};
use super::optim::{OptimizerConfig, OptimizerState};
use crate::corpus::{LinkedSentence, RelationBag};
use crate::encoder::{
    init_params, Checkpoint, CheckpointMeta, EncoderConfig, EncoderKind, ParamSet, Precision, Transformer,
};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::sampler::{build_cp_batch, build_mtb_batch, EntityPairIndex, SamplerConfig};
use crate::textproc::Vocab;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Cp,
    Mtb,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Cp => "cp",
            Objective::Mtb => "mtb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub objective: Objective,
    pub steps: u64,
    /// Seeds initialization, batches and dropout.
    pub seed: u64,
    pub temperature: f64,
    /// Masked-token term in MTB mode; CP mode always includes it when the
    /// sampler's masking rate is positive.
    pub mtb_mlm: bool,
    pub sampler: SamplerConfig,
    pub encoder: EncoderConfig,
    pub optimizer: OptimizerConfig,
    /// Masked-token steps before the first contrastive or MTB step.
    pub mlm_stage: MlmStageConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            objective: Objective::Cp,
            steps: 100,
            seed: 0,
            temperature: 1.0,
            mtb_mlm: false,
            sampler: SamplerConfig::default(),
            encoder: EncoderConfig::default(),
            optimizer: OptimizerConfig::default(),
            mlm_stage: MlmStageConfig::default(),
        }
    }
}

pub struct PretrainOutput {
    pub params: ParamSet,
    /// One entry per step.
    pub log: Vec<LossBreakdown>,
    /// Mean masked-token loss of each MLM-stage step.
    pub mlm_stage_log: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PretrainOutput {
    pub fn checkpoint(&self, cfg: &PretrainConfig, vocab: &Vocab) -> Checkpoint {
        let mut meta = CheckpointMeta {
            encoder: cfg.encoder.clone(),
            vocab_hash: vocab.hash(),
            labels: Vec::new(),
            extra: Default::default(),
        };
        meta.extra.insert("objective".into(), cfg.objective.name().into());
        meta.extra.insert("steps".into(), cfg.steps.to_string());
        meta.extra.insert("seed".into(), cfg.seed.to_string());
        meta.extra
            .insert("mlm_stage_steps".into(), cfg.mlm_stage.steps.to_string());
        Checkpoint {
            meta,
            params: self.params.clone(),
        }
    }

    pub fn loss_csv(&self) -> String {
        loss_csv(&self.log)
    }
}

/// `step,l_cp,l_mlm,l_total`, one row per step, steps counted from 1.
pub fn loss_csv(log: &[LossBreakdown]) -> String {
    let mut out = String::from("step,l_cp,l_mlm,l_total\n");
    for (i, b) in log.iter().enumerate() {
        writeln!(out, "{},{},{},{}", i + 1, b.l_cp, b.l_mlm, b.l_total).expect("write to string");
    }
    out
}

pub fn write_loss_csv(path: impl AsRef<Path>, log: &[LossBreakdown]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, loss_csv(log)).map_err(|e| Error::io(path, e))
}

/// [`pretrain_with_mlm_stage`] with the MLM stage drawing from `corpus` itself.
pub fn pretrain(
    corpus: &[LinkedSentence],
    bags: &RelationBag,
    vocab: &Vocab,
    cfg: &PretrainConfig,
) -> Result<PretrainOutput> {
    pretrain_with_mlm_stage(corpus, bags, corpus, vocab, cfg)
}

/// Runs the MLM stage over `mlm_stage_corpus` (labels unused), then `cfg.steps`
/// optimization steps on `corpus`. Batch `s` comes from stream `(seed, s)` of
/// the sampler and its dropout masks from `(seed, DROPOUT, s)`, so a run is a
/// function of the configuration and the corpora alone.
pub fn pretrain_with_mlm_stage(
    corpus: &[LinkedSentence],
    bags: &RelationBag,
    mlm_stage_corpus: &[LinkedSentence],
    vocab: &Vocab,
    cfg: &PretrainConfig,
) -> Result<PretrainOutput> {
    check_config(cfg, vocab)?;
    let t = Transformer::new(&cfg.encoder)?;
    let mut params = init_params(&cfg.encoder, cfg.seed)?;
    let mlm_stage_log = mlm_stage(&t, &mut params, mlm_stage_corpus, vocab, &cfg.mlm_stage, cfg.seed)?;
    let mut out = pretrain_from(params, corpus, bags, vocab, cfg)?;
    out.mlm_stage_log = mlm_stage_log;
    Ok(out)
}

/// The optimization steps of [`pretrain_with_mlm_stage`] from given weights;
/// `cfg.mlm_stage` is ignored.
pub fn pretrain_from(
    mut params: ParamSet,
    corpus: &[LinkedSentence],
    bags: &RelationBag,
    vocab: &Vocab,
    cfg: &PretrainConfig,
) -> Result<PretrainOutput> {
    check_config(cfg, vocab)?;
    let sampler = SamplerConfig {
        seed: cfg.seed,
        ..cfg.sampler.clone()
    };
    sampler.validate()?;
    let t = Transformer::new(&cfg.encoder)?;
    let mut warnings = Vec::new();
    let opts = BatchOptions {
        temperature: cfg.temperature,
        mlm: match cfg.objective {
            Objective::Cp => sampler.mlm_rate > 0.0,
            Objective::Mtb => cfg.mtb_mlm && sampler.mlm_rate > 0.0,
        },
    };
    if opts.mlm {
        ensure_mlm_head(&mut params);
    }
    if cfg.objective == Objective::Cp && sampler.batch_pairs == 1 {
        warnings.push("a batch of one pair has no negatives: contrastive loss and gradient are zero".into());
    }
    let pair_index = match cfg.objective {
        Objective::Mtb => Some(EntityPairIndex::build(corpus)),
        Objective::Cp => None,
    };

    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &params);
    let mut log = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        let mut dropout = rng::stream(cfg.seed, tag::DROPOUT, step);
        let (breakdown, mut grads) = match &pair_index {
            None => {
                let batch = build_cp_batch(corpus, bags, &sampler, vocab, step)?;
                batch_cp_loss(&t, &params, &batch, opts, Some(&mut dropout))?
            }
            Some(index) => {
                let batch = build_mtb_batch(corpus, index, &sampler, vocab, step)?;
                batch_mtb_loss(&t, &params, &batch, opts, Some(&mut dropout))?
            }
        };
        opt.step(&mut params, &mut grads)?;
        if cfg.encoder.precision == Precision::F32 {
            params.round_to_f32();
        }
        log.push(breakdown);
    }
    Ok(PretrainOutput {
        params,
        log,
        mlm_stage_log: Vec::new(),
        warnings,
    })
}

fn check_config(cfg: &PretrainConfig, vocab: &Vocab) -> Result<()> {
    if cfg.encoder.kind != EncoderKind::Transformer {
        return Err(Error::Config("pre-training needs the transformer encoder".into()));
    }
    if cfg.encoder.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "encoder vocab_size {} but vocabulary has {} entries",
            cfg.encoder.vocab_size,
            vocab.len()
        )));
    }
    if cfg.sampler.max_len != cfg.encoder.max_len {
        return Err(Error::Config(format!(
            "sampler max_len {} differs from encoder max_len {}",
            cfg.sampler.max_len, cfg.encoder.max_len
        )));
    }
    Ok(())
}
