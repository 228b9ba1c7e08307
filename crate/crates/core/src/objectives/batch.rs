use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::losses::{in_batch_cp, mtb_loss_from_logit};
use super::mlm::{mlm_terms, MLM_BIAS};
use crate::encoder::{entity_pair_repr, entity_pair_repr_backward, Mode, ParamSet, Transformer, TransformerCache};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sampler::{ContrastiveBatch, MtbExample};
use crate::textproc::EncodedInput;

/// Loss of one training step. `l_cp` holds the binary loss in MTB mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cp: f64,
    pub l_mlm: f64,
    pub l_total: f64,
    pub pairs: usize,
    pub masked_tokens: usize,
}

impl LossBreakdown {
    fn new(l_cp: f64, l_mlm: f64, pairs: usize, masked_tokens: usize) -> Self {
        LossBreakdown {
            l_cp,
            l_mlm,
            l_total: l_cp + l_mlm,
            pairs,
            masked_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub temperature: f64,
    /// Adds the masked-token term over every labeled position in the batch.
    pub mlm: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            temperature: 1.0,
            mlm: true,
        }
    }
}

struct Forward {
    caches: Vec<TransformerCache>,
    hidden: Vec<Array2<f64>>,
    reprs: Array2<f64>,
}

fn forward_all(
    t: &Transformer,
    p: &ParamSet,
    inputs: &[&EncodedInput],
    mut dropout: Option<&mut Rng>,
) -> Result<Forward> {
    let width = 2 * t.config().hidden_dim;
    let mut reprs = Array2::zeros((inputs.len(), width));
    let mut caches = Vec::with_capacity(inputs.len());
    let mut hidden = Vec::with_capacity(inputs.len());
    for (i, enc) in inputs.iter().enumerate() {
        let mode = match dropout.as_deref_mut() {
            Some(rng) => Mode::Train(rng),
            None => Mode::Inference,
        };
        let pass = t.forward(p, enc, mode)?;
        reprs.row_mut(i).assign(&entity_pair_repr(
            pass.hidden.view(),
            enc.e1_pos,
            enc.e2_pos,
            &enc.attention_mask,
        )?);
        caches.push(pass.cache);
        hidden.push(pass.hidden);
    }
    Ok(Forward { caches, hidden, reprs })
}

/// Adds the masked-token term to the per-sentence hidden gradients and
/// returns the mean loss with the number of labeled positions.
fn add_mlm(
    p: &ParamSet,
    inputs: &[&EncodedInput],
    fwd: &Forward,
    d_hidden: &mut [Array2<f64>],
    grads: &mut ParamSet,
) -> Result<(f64, usize)> {
    let count: usize = inputs.iter().map(|e| e.num_mlm_targets()).sum();
    if count == 0 {
        return Ok((0.0, 0));
    }
    let bias = p
        .get(MLM_BIAS)
        .ok_or_else(|| Error::Config(format!("masked-token objective needs the {MLM_BIAS} parameter")))?;
    let scale = 1.0 / count as f64;
    let mut sum = 0.0;
    for (i, enc) in inputs.iter().enumerate() {
        let t = mlm_terms(fwd.hidden[i].view(), &enc.mlm_labels, &p["tok_emb"], bias, scale)?;
        sum += t.sum;
        d_hidden[i] += &t.d_hidden;
        grads["tok_emb"] += &t.d_tok_emb;
        grads[MLM_BIAS] += &t.d_bias;
    }
    Ok((sum / count as f64, count))
}

fn backward_all(
    t: &Transformer,
    p: &ParamSet,
    inputs: &[&EncodedInput],
    fwd: &Forward,
    d_reprs: &Array2<f64>,
    mut d_hidden: Vec<Array2<f64>>,
    grads: &mut ParamSet,
) {
    for (i, enc) in inputs.iter().enumerate() {
        let d: Array1<f64> = d_reprs.row(i).to_owned();
        entity_pair_repr_backward(&d, enc.e1_pos, enc.e2_pos, &mut d_hidden[i]);
        t.backward(p, &fwd.caches[i], d_hidden[i].view(), grads);
    }
}

/// Mean in-batch contrastive loss (pair `i`'s negatives are the `B` sides of
/// every other pair) plus, optionally, the masked-token loss over both sides
/// of every pair. Returns the loss and gradients shaped like `p`.
///
/// Sentences run in order A0, B0, A1, B1, ...; when `dropout` is given,
/// masks are drawn from it in that order.
pub fn batch_cp_loss(
    t: &Transformer,
    p: &ParamSet,
    batch: &ContrastiveBatch,
    opts: BatchOptions,
    dropout: Option<&mut Rng>,
) -> Result<(LossBreakdown, ParamSet)> {
    if batch.is_empty() {
        return Err(Error::Config("empty contrastive batch".into()));
    }
    if opts.temperature.is_nan() || opts.temperature <= 0.0 {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let inputs: Vec<&EncodedInput> = batch.pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let fwd = forward_all(t, p, &inputs, dropout)?;
    let n = batch.len();
    let xa = Array2::from_shape_fn((n, fwd.reprs.ncols()), |(i, j)| fwd.reprs[(2 * i, j)]);
    let xb = Array2::from_shape_fn((n, fwd.reprs.ncols()), |(i, j)| fwd.reprs[(2 * i + 1, j)]);
    let (l_cp, dxa, dxb) = in_batch_cp(&xa, &xb, opts.temperature);
    if !l_cp.is_finite() {
        return Err(Error::NonFinite("contrastive loss".into()));
    }
    let d_reprs = Array2::from_shape_fn(fwd.reprs.raw_dim(), |(i, j)| {
        if i % 2 == 0 {
            dxa[(i / 2, j)]
        } else {
            dxb[(i / 2, j)]
        }
    });

    let mut grads = p.zeros_like();
    let mut d_hidden: Vec<Array2<f64>> = fwd.hidden.iter().map(|h| Array2::zeros(h.raw_dim())).collect();
    let (l_mlm, masked) = if opts.mlm {
        add_mlm(p, &inputs, &fwd, &mut d_hidden, &mut grads)?
    } else {
        (0.0, 0)
    };
    backward_all(t, p, &inputs, &fwd, &d_reprs, d_hidden, &mut grads);
    Ok((LossBreakdown::new(l_cp, l_mlm, n, masked), grads))
}

/// Mean binary same-entity-pair loss over the examples, optionally with the
/// masked-token term.
pub fn batch_mtb_loss(
    t: &Transformer,
    p: &ParamSet,
    batch: &[MtbExample],
    opts: BatchOptions,
    dropout: Option<&mut Rng>,
) -> Result<(LossBreakdown, ParamSet)> {
    if batch.is_empty() {
        return Err(Error::Config("empty MTB batch".into()));
    }
    let inputs: Vec<&EncodedInput> = batch.iter().flat_map(|e| [&e.a, &e.b]).collect();
    let fwd = forward_all(t, p, &inputs, dropout)?;
    let n = batch.len() as f64;
    let mut d_reprs = Array2::zeros(fwd.reprs.raw_dim());
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let (r1, r2) = (fwd.reprs.row(2 * i), fwd.reprs.row(2 * i + 1));
        let (loss, dz) = mtb_loss_from_logit(r1.dot(&r2), ex.label);
        total += loss;
        let d1 = &r2 * (dz / n);
        let d2 = &r1 * (dz / n);
        d_reprs.row_mut(2 * i).assign(&d1);
        d_reprs.row_mut(2 * i + 1).assign(&d2);
    }
    let l = total / n;
    if !l.is_finite() {
        return Err(Error::NonFinite("MTB loss".into()));
    }
    let mut grads = p.zeros_like();
    let mut d_hidden: Vec<Array2<f64>> = fwd.hidden.iter().map(|h| Array2::zeros(h.raw_dim())).collect();
    let (l_mlm, masked) = if opts.mlm {
        add_mlm(p, &inputs, &fwd, &mut d_hidden, &mut grads)?
    } else {
        (0.0, 0)
    };
    backward_all(t, p, &inputs, &fwd, &d_reprs, d_hidden, &mut grads);
    Ok((LossBreakdown::new(l, l_mlm, batch.len(), masked), grads))
}
