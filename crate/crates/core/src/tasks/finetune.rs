use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::micro_f1;
use crate::corpus::LinkedSentence;
use crate::encoder::ops::log_sum_exp;
use crate::encoder::{
    init_params, register_normal, Checkpoint, CheckpointMeta, CnnInput, Encoder, EncoderConfig, EncoderKind, Mode,
    ModelInput, ParamSet, Precision,
};
use crate::error::{Error, Result};
use crate::objectives::{OptimizerConfig, OptimizerState, MLM_BIAS};
use crate::rng::{self, tag, Rng};
use crate::textproc::vocab::PAD_ID;
use crate::textproc::{encode, InputSetting, Vocab};

pub const HEAD_W: &str = "head.cls.w";
pub const HEAD_B: &str = "head.cls.b";

/// Offset separating dropout streams from shuffling streams under the
/// fine-tuning tag.
const DROPOUT_STREAMS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub setting: InputSetting,
    pub epochs: usize,
    pub batch_size: usize,
    /// Token budget per sentence; at most the encoder's length.
    pub max_len: usize,
    pub seed: u64,
    /// Label excluded from micro-F1 counts; accuracy is reported when unset.
    pub na_label: Option<String>,
    pub optimizer: OptimizerConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            setting: InputSetting::ContextMention,
            epochs: 6,
            batch_size: 16,
            max_len: 64,
            seed: 42,
            na_label: None,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Encoder inputs for `sentences` under `setting`, padded to the encoder
/// length. The CNN reads the raw sentence with position features and only
/// supports the context-plus-mention setting.
pub fn model_inputs(
    cfg: &EncoderConfig,
    setting: InputSetting,
    max_len: usize,
    vocab: &Vocab,
    sentences: &[LinkedSentence],
) -> Result<Vec<ModelInput>> {
    if max_len > cfg.max_len {
        return Err(Error::Config(format!(
            "max_len {max_len} exceeds the encoder length {}",
            cfg.max_len
        )));
    }
    match cfg.kind {
        EncoderKind::Cnn => {
            if setting != InputSetting::ContextMention {
                return Err(Error::Config(format!("the cnn encoder does not support {setting}")));
            }
            Ok(sentences
                .iter()
                .map(|s| ModelInput::Cnn(CnnInput::from_sentence(s, vocab, cfg.cnn.clip, max_len)))
                .collect())
        }
        EncoderKind::Transformer => sentences
            .iter()
            .map(|s| {
                let mut enc = encode(&setting.apply(s)?, vocab, max_len)?;
                enc.ids.resize(cfg.max_len, PAD_ID);
                enc.attention_mask.resize(cfg.max_len, 0);
                enc.mlm_labels.resize(cfg.max_len, None);
                Ok(ModelInput::Transformer(enc))
            })
            .collect(),
    }
}

/// Mean softmax cross-entropy of the linear head over the pair
/// representations, with gradients for the head and the encoder.
pub fn classifier_loss(
    encoder: &Encoder,
    p: &ParamSet,
    inputs: &[&ModelInput],
    labels: &[usize],
    mut dropout: Option<&mut Rng>,
) -> Result<(f64, ParamSet)> {
    if inputs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: inputs.len(),
            right: labels.len(),
        });
    }
    let (w, b) = (&p[HEAD_W], &p[HEAD_B]);
    let n = inputs.len() as f64;
    let mut grads = p.zeros_like();
    let mut total = 0.0;
    for (input, &y) in inputs.iter().zip(labels) {
        if y >= w.ncols() {
            return Err(Error::LabelRange {
                label: y,
                vocab: w.ncols(),
            });
        }
        let mode = match dropout.as_deref_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Inference,
        };
        let (repr, cache) = encoder.represent(p, input, mode)?;
        let z = repr.dot(w) + b.row(0);
        let lse = log_sum_exp(z.as_slice().expect("contiguous"));
        total += lse - z[y];
        let mut dz = z.mapv(|v| (v - lse).exp());
        dz[y] -= 1.0;
        dz /= n;
        grads[HEAD_W] += &repr.view().insert_axis(Axis(1)).dot(&dz.view().insert_axis(Axis(0)));
        let mut db = grads[HEAD_B].row_mut(0);
        db += &dz;
        let d_repr: Array1<f64> = w.dot(&dz);
        encoder.represent_backward(p, &cache, &d_repr, &mut grads);
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("classification loss".into()));
    }
    Ok((loss, grads))
}

/// Linear softmax classifier over an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub encoder: EncoderConfig,
    pub params: ParamSet,
    pub labels: Vec<String>,
    pub setting: InputSetting,
    pub max_len: usize,
}

impl Classifier {
    pub fn inputs(&self, vocab: &Vocab, sentences: &[LinkedSentence]) -> Result<Vec<ModelInput>> {
        model_inputs(&self.encoder, self.setting, self.max_len, vocab, sentences)
    }

    pub fn predict_inputs(&self, inputs: &[ModelInput]) -> Result<Vec<usize>> {
        let enc = Encoder::new(&self.encoder)?;
        let (w, b) = (&self.params[HEAD_W], &self.params[HEAD_B]);
        inputs
            .iter()
            .map(|x| {
                let (repr, _) = enc.represent(&self.params, x, Mode::Inference)?;
                let z = repr.dot(w) + b.row(0);
                Ok(argmax(z.as_slice().expect("contiguous")))
            })
            .collect()
    }

    /// Predicted label indices, in `labels` order.
    pub fn predict(&self, vocab: &Vocab, sentences: &[LinkedSentence]) -> Result<Vec<usize>> {
        self.predict_inputs(&self.inputs(vocab, sentences)?)
    }

    /// Gold indices; labels unseen in training map to `labels.len()`, which
    /// is never predicted.
    pub fn gold(&self, sentences: &[LinkedSentence]) -> Result<Vec<usize>> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let r = s.relation_id.as_deref().ok_or(Error::Unlabeled(i))?;
                Ok(self.labels.iter().position(|l| l == r).unwrap_or(self.labels.len()))
            })
            .collect()
    }

    /// Task metric of predictions against gold indices: micro-F1 without
    /// `na_label` when given, otherwise accuracy.
    pub fn score(&self, gold: &[usize], pred: &[usize], na_label: Option<&str>) -> Result<f64> {
        let na = na_label.map(|na| self.labels.iter().position(|l| l == na).unwrap_or(usize::MAX));
        micro_f1(gold, pred, na.as_ref())
    }

    pub fn evaluate(
        &self,
        vocab: &Vocab,
        sentences: &[LinkedSentence],
        na_label: Option<&str>,
    ) -> Result<(f64, Vec<usize>)> {
        let pred = self.predict(vocab, sentences)?;
        Ok((self.score(&self.gold(sentences)?, &pred, na_label)?, pred))
    }

    pub fn to_checkpoint(&self, vocab: &Vocab) -> Checkpoint {
        let mut meta = CheckpointMeta {
            encoder: self.encoder.clone(),
            vocab_hash: vocab.hash(),
            labels: self.labels.clone(),
            extra: Default::default(),
        };
        meta.extra.insert("setting".into(), self.setting.name().into());
        meta.extra.insert("max_len".into(), self.max_len.to_string());
        Checkpoint {
            meta,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let setting = ck
            .meta
            .extra
            .get("setting")
            .ok_or_else(|| Error::Checkpoint("not a classifier checkpoint: no setting".into()))?
            .parse()?;
        let max_len = ck
            .meta
            .extra
            .get("max_len")
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| Error::Checkpoint("not a classifier checkpoint: no max_len".into()))?;
        if !ck.params.contains(HEAD_W) || !ck.params.contains(HEAD_B) {
            return Err(Error::Checkpoint("classifier head missing".into()));
        }
        Ok(Classifier {
            encoder: ck.meta.encoder.clone(),
            params: ck.params.clone(),
            labels: ck.meta.labels.clone(),
            setting,
            max_len,
        })
    }
}

/// Index of the largest value; the lowest index among ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub struct FinetuneOutput {
    pub classifier: Classifier,
    /// Dev metric after each epoch; empty without dev data.
    pub dev_history: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Encoder parameters to start fine-tuning from: a pre-trained checkpoint
/// (vocabulary must match) or a fresh initialization.
pub fn encoder_init(
    cfg: &EncoderConfig,
    checkpoint: Option<&Checkpoint>,
    vocab: &Vocab,
    seed: u64,
) -> Result<ParamSet> {
    match checkpoint {
        Some(ck) => {
            if ck.meta.vocab_hash != vocab.hash() {
                return Err(Error::Checkpoint(
                    "checkpoint was trained with a different vocabulary".into(),
                ));
            }
            if ck.meta.encoder != *cfg {
                return Err(Error::Checkpoint("checkpoint encoder configuration differs".into()));
            }
            let mut p = ck.params.clone();
            p.remove(MLM_BIAS);
            p.remove(HEAD_W);
            p.remove(HEAD_B);
            Ok(p)
        }
        None => init_params(cfg, seed),
    }
}

/// Trains a linear head and the encoder with cross-entropy, keeping the
/// epoch with the best dev metric (the earliest among equals; the last
/// epoch without dev data). Labels are the sorted relations of `train`.
///
/// Epoch `e` shuffles with stream `(seed, FINETUNE, e)`; dropout uses
/// `(seed, FINETUNE, 2^32 + step)`.
pub fn finetune(
    encoder_cfg: &EncoderConfig,
    init: &ParamSet,
    vocab: &Vocab,
    train: &[LinkedSentence],
    dev: &[LinkedSentence],
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutput> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch_size and epochs must be positive".into()));
    }
    if cfg.setting.needs_types() {
        if let Some(i) = train
            .iter()
            .chain(dev)
            .position(|s| s.head.entity_type.is_none() || s.tail.entity_type.is_none())
        {
            return Err(Error::Config(format!(
                "{} needs entity types, sentence {i} has none",
                cfg.setting
            )));
        }
    }
    let mut labels: Vec<String> = train
        .iter()
        .enumerate()
        .map(|(i, s)| s.relation_id.clone().ok_or(Error::Unlabeled(i)))
        .collect::<Result<_>>()?;
    labels.sort();
    labels.dedup();

    let encoder = Encoder::new(encoder_cfg)?;
    let mut params = init.clone();
    let d = encoder_cfg.repr_dim();
    register_normal(&mut params, HEAD_W, (d, labels.len()), cfg.seed, 1);
    params.insert(HEAD_B, Array2::zeros((1, labels.len())));
    if encoder_cfg.precision == Precision::F32 {
        params.round_to_f32();
    }

    let mut clf = Classifier {
        encoder: encoder_cfg.clone(),
        params,
        labels,
        setting: cfg.setting,
        max_len: cfg.max_len,
    };
    let train_inputs = clf.inputs(vocab, train)?;
    let train_gold = clf.gold(train)?;
    let dev_inputs = clf.inputs(vocab, dev)?;
    let dev_gold = clf.gold(dev)?;

    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &clf.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut history = Vec::new();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, tag::FINETUNE, epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&ModelInput> = chunk.iter().map(|&i| &train_inputs[i]).collect();
            let gold: Vec<usize> = chunk.iter().map(|&i| train_gold[i]).collect();
            let mut dropout = rng::stream(cfg.seed, tag::FINETUNE, DROPOUT_STREAMS + step);
            let (_, mut grads) = classifier_loss(&encoder, &clf.params, &inputs, &gold, Some(&mut dropout))?;
            opt.step(&mut clf.params, &mut grads)?;
            if encoder_cfg.precision == Precision::F32 {
                clf.params.round_to_f32();
            }
            step += 1;
        }
        if !dev.is_empty() {
            let pred = clf.predict_inputs(&dev_inputs)?;
            let m = clf.score(&dev_gold, &pred, cfg.na_label.as_deref())?;
            history.push(m);
            if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                best = Some((m, epoch + 1, clf.params.clone()));
            }
        }
    }
    let best_epoch = match best {
        Some((_, e, p)) => {
            clf.params = p;
            e
        }
        None => cfg.epochs,
    };
    Ok(FinetuneOutput {
        classifier: clf,
        dev_history: history,
        best_epoch,
    })
}
