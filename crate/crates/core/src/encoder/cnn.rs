//! Convolutional sentence encoder with relative position embeddings.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{EncoderConfig, EncoderKind, ParamSet};
use crate::corpus::LinkedSentence;
use crate::error::{Error, Result};
use crate::textproc::{position_features, Vocab};

/// Word ids with their (head, tail) position-embedding indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnInput {
    pub ids: Vec<usize>,
    pub positions: Vec<(usize, usize)>,
}

impl CnnInput {
    /// Raw sentence tokens, truncated to `max_len`.
    pub fn from_sentence(s: &LinkedSentence, vocab: &Vocab, clip: usize, max_len: usize) -> Self {
        let n = s.tokens.len().min(max_len);
        CnnInput {
            ids: s.tokens[..n].iter().map(|t| vocab.id(t)).collect(),
            positions: position_features(s, clip)[..n].to_vec(),
        }
    }
}

pub struct CnnCache {
    input: CnnInput,
    /// `n x (window * embedding width)` unrolled convolution input.
    patches: Array2<f64>,
    argmax: Vec<usize>,
    out: Array1<f64>,
}

fn check(cfg: &EncoderConfig, input: &CnnInput) -> Result<()> {
    if cfg.kind != EncoderKind::Cnn {
        return Err(Error::Config("not a cnn configuration".into()));
    }
    if input.ids.is_empty() || input.ids.len() != input.positions.len() {
        return Err(Error::Shape(
            "cnn input must be non-empty with one position pair per token".into(),
        ));
    }
    let limit = 2 * cfg.cnn.clip;
    if input.positions.iter().any(|&(a, b)| a > limit || b > limit) {
        return Err(Error::Shape(format!("position index beyond clip {}", cfg.cnn.clip)));
    }
    if let Some(&id) = input.ids.iter().find(|&&i| i >= cfg.vocab_size) {
        return Err(Error::LabelRange {
            label: id,
            vocab: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Token and position embeddings, a same-padded 1-D convolution, max-pooling
/// over the sentence and `tanh`.
pub fn cnn_forward(cfg: &EncoderConfig, p: &ParamSet, input: &CnnInput) -> Result<(Array1<f64>, CnnCache)> {
    check(cfg, input)?;
    let c = &cfg.cnn;
    let n = input.ids.len();
    let width = c.word_dim + 2 * c.position_dim;
    let mut emb = Array2::zeros((n, width));
    for (i, (&id, &(ph, pt))) in input.ids.iter().zip(&input.positions).enumerate() {
        let mut row = emb.row_mut(i);
        row.slice_mut(s![..c.word_dim]).assign(&p["cnn.tok_emb"].row(id));
        row.slice_mut(s![c.word_dim..c.word_dim + c.position_dim])
            .assign(&p["cnn.pos_head"].row(ph));
        row.slice_mut(s![c.word_dim + c.position_dim..])
            .assign(&p["cnn.pos_tail"].row(pt));
    }
    let left = (c.window - 1) / 2;
    let mut patches = Array2::zeros((n, c.window * width));
    for i in 0..n {
        for k in 0..c.window {
            let src = i as isize + k as isize - left as isize;
            if (0..n as isize).contains(&src) {
                patches
                    .slice_mut(s![i, k * width..(k + 1) * width])
                    .assign(&emb.row(src as usize));
            }
        }
    }
    let conv = patches.dot(&p["cnn.conv.w"]) + &p["cnn.conv.b"];
    let argmax: Vec<usize> = conv
        .columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect();
    let out: Array1<f64> = argmax.iter().enumerate().map(|(f, &i)| conv[(i, f)].tanh()).collect();
    let cache = CnnCache {
        input: input.clone(),
        patches,
        argmax,
        out: out.clone(),
    };
    Ok((out, cache))
}

pub fn cnn_backward(cfg: &EncoderConfig, p: &ParamSet, cache: &CnnCache, d_out: &Array1<f64>, grads: &mut ParamSet) {
    let c = &cfg.cnn;
    let n = cache.input.ids.len();
    let width = c.word_dim + 2 * c.position_dim;
    let mut dconv = Array2::zeros((n, c.filters));
    for (f, &i) in cache.argmax.iter().enumerate() {
        dconv[(i, f)] = d_out[f] * (1.0 - cache.out[f] * cache.out[f]);
    }
    grads["cnn.conv.b"] += &dconv.sum_axis(Axis(0)).insert_axis(Axis(0));
    grads["cnn.conv.w"] += &cache.patches.t().dot(&dconv);
    let dpatches = dconv.dot(&p["cnn.conv.w"].t());

    let left = (c.window - 1) / 2;
    let mut demb = Array2::<f64>::zeros((n, width));
    for i in 0..n {
        for k in 0..c.window {
            let src = i as isize + k as isize - left as isize;
            if (0..n as isize).contains(&src) {
                let mut row = demb.row_mut(src as usize);
                row += &dpatches.slice(s![i, k * width..(k + 1) * width]);
            }
        }
    }
    for (i, (&id, &(ph, pt))) in cache.input.ids.iter().zip(&cache.input.positions).enumerate() {
        let row = demb.row(i);
        let mut t = grads["cnn.tok_emb"].row_mut(id);
        t += &row.slice(s![..c.word_dim]);
        let mut h = grads["cnn.pos_head"].row_mut(ph);
        h += &row.slice(s![c.word_dim..c.word_dim + c.position_dim]);
        let mut tl = grads["cnn.pos_tail"].row_mut(pt);
        tl += &row.slice(s![c.word_dim + c.position_dim..]);
    }
}
