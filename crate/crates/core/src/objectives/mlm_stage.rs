use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mlm::{ensure_mlm_head, mlm_terms, MLM_BIAS};
use super::optim::{OptimizerConfig, OptimizerState};
use crate::corpus::LinkedSentence;
use crate::encoder::{Mode, ParamSet, Precision, Transformer};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::textproc::{encode, format_cm, mlm_mask, EncodedInput, Vocab};

/// Masked-token training over unlabeled sentences, run before the
/// contrastive steps. It stands in for starting from a language model that
/// has already seen every word of the corpus: without it, words that only
/// occur in relations absent from the pre-training bags are never prediction
/// targets, and the tied output layer pushes all of their embeddings toward
/// one shared direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlmStageConfig {
    pub steps: u64,
    /// Sentences per step, drawn with replacement.
    pub batch_size: usize,
    pub mlm_rate: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for MlmStageConfig {
    fn default() -> Self {
        MlmStageConfig {
            steps: 0,
            batch_size: 8,
            mlm_rate: 0.15,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Runs `cfg.steps` masked-token steps in place and returns the mean loss of
/// each step. Step `s` draws its sentences and masks from `(seed, MLM_STAGE, s)`;
/// a step whose draw masks nothing is logged as 0 and leaves the weights
/// alone. Dropout is off.
pub fn mlm_stage(
    t: &Transformer,
    params: &mut ParamSet,
    sentences: &[LinkedSentence],
    vocab: &Vocab,
    cfg: &MlmStageConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if cfg.steps == 0 {
        return Ok(Vec::new());
    }
    if sentences.is_empty() {
        return Err(Error::Config("MLM-stage corpus is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.mlm_rate > 0.0 && cfg.mlm_rate <= 1.0) {
        return Err(Error::Config(format!(
            "MLM stage needs batch_size >= 1 and mlm_rate in (0, 1], got {} and {}",
            cfg.batch_size, cfg.mlm_rate
        )));
    }
    let cfg_enc = t.config();
    let inputs: Vec<EncodedInput> = sentences
        .iter()
        .map(|s| encode(&format_cm(s), vocab, cfg_enc.max_len))
        .collect::<Result<_>>()?;
    ensure_mlm_head(params);
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), params);
    let mut losses = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        let mut r = rng::stream(seed, tag::MLM_STAGE, step);
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| r.random_range(0..inputs.len())).collect();
        let masked: Vec<EncodedInput> = picks
            .iter()
            .map(|&i| mlm_mask(&inputs[i], cfg.mlm_rate, vocab.len(), &mut r))
            .collect();
        let count: usize = masked.iter().map(EncodedInput::num_mlm_targets).sum();
        if count == 0 {
            losses.push(0.0);
            continue;
        }
        let mut grads = params.zeros_like();
        let mut sum = 0.0;
        for m in &masked {
            let pass = t.forward(params, m, Mode::Inference)?;
            let terms = mlm_terms(
                pass.hidden.view(),
                &m.mlm_labels,
                &params["tok_emb"],
                &params[MLM_BIAS],
                1.0 / count as f64,
            )?;
            sum += terms.sum;
            grads["tok_emb"] += &terms.d_tok_emb;
            grads[MLM_BIAS] += &terms.d_bias;
            t.backward(params, &pass.cache, terms.d_hidden.view(), &mut grads);
        }
        opt.step(params, &mut grads)?;
        if cfg_enc.precision == Precision::F32 {
            params.round_to_f32();
        }
        losses.push(sum / count as f64);
    }
    Ok(losses)
}
