//! Downstream evaluation: supervised fine-tuning with per-relation
//! subsampling, prototypical few-shot episodes, metrics and the multi-seed
//! median protocol.

mod fewshot;
mod finetune;
mod metrics;
mod report;
mod subsample;
mod toy;

pub use fewshot::{
    episode_accuracy, evaluate_fewshot, proto_classify, represent_all, sample_episode, Episode, FewshotConfig,
};
pub use finetune::{
    argmax, classifier_loss, encoder_init, finetune, model_inputs, Classifier, FinetuneConfig, FinetuneOutput, HEAD_B,
    HEAD_W,
};
pub use metrics::{accuracy, median, micro_f1, Metric};
pub use report::{predictions_jsonl, EvalReport, Prediction};
pub use subsample::{kept_count, subsample_per_relation};
pub use toy::{run_toy, InitScores, ToyConfig, ToyReport};

use crate::corpus::LinkedSentence;
use crate::encoder::{EncoderConfig, ParamSet};
use crate::error::Result;
use crate::textproc::Vocab;

/// Per-seed outcome of [`evaluate_supervised`].
pub struct SupervisedRun {
    pub report: EvalReport,
    pub classifiers: Vec<Classifier>,
    /// Test predictions per seed.
    pub predictions: Vec<Vec<usize>>,
}

/// Fine-tunes once per seed from the same initialization and scores each
/// classifier on `test`; the report carries every value and their median.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_supervised(
    encoder: &EncoderConfig,
    init: &ParamSet,
    vocab: &Vocab,
    train: &[LinkedSentence],
    dev: &[LinkedSentence],
    test: &[LinkedSentence],
    cfg: &FinetuneConfig,
    seeds: &[u64],
) -> Result<SupervisedRun> {
    if seeds.is_empty() {
        return Err(crate::Error::Config("no evaluation seeds".into()));
    }
    if test.is_empty() {
        return Err(crate::Error::Config("empty test set".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut classifiers = Vec::with_capacity(seeds.len());
    let mut predictions = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run_cfg = FinetuneConfig { seed, ..cfg.clone() };
        let out = finetune(encoder, init, vocab, train, dev, &run_cfg)?;
        let (m, pred) = out.classifier.evaluate(vocab, test, cfg.na_label.as_deref())?;
        per_seed.push(m);
        predictions.push(pred);
        classifiers.push(out.classifier);
    }
    Ok(SupervisedRun {
        report: EvalReport {
            metric: if cfg.na_label.is_some() {
                Metric::MicroF1
            } else {
                Metric::Accuracy
            },
            median: median(&per_seed).expect("non-empty"),
            per_seed,
            seeds: seeds.to_vec(),
            episodes: None,
        },
        classifiers,
        predictions,
    })
}
