//! Post-norm transformer encoder (BERT layout) with a hand-written backward
//! pass.
//!
//! Only the unpadded prefix of the input is run through the layers. Padding
//! is always a suffix and padded keys are excluded from every attention row,
//! so this is the same computation as masking them to `-inf`; hidden rows at
//! padded positions are returned as zeros.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use super::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, softmax_rows, softmax_rows_backward, LayerNormCache,
};
use super::params::{EncoderConfig, EncoderKind, ParamSet};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::textproc::EncodedInput;

/// Dropout is active only in `Train` mode.
pub enum Mode<'a> {
    Inference,
    Train(&'a mut Rng),
}

impl Mode<'_> {
    fn dropout_mask(&mut self, rate: f64, shape: (usize, usize)) -> Option<Array2<f64>> {
        match self {
            Mode::Train(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                Some(Array2::from_shape_simple_fn(shape, || {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
            _ => None,
        }
    }
}

struct LayerNames {
    w: [String; 4],
    b: [String; 4],
    ln1: [String; 2],
    ffn: [String; 4],
    ln2: [String; 2],
}

impl LayerNames {
    fn new(i: usize) -> Self {
        let p = |s: &str| format!("layer{i}.{s}");
        LayerNames {
            w: ["wq", "wk", "wv", "wo"].map(|w| p(&format!("attn.{w}"))),
            b: ["bq", "bk", "bv", "bo"].map(|b| p(&format!("attn.{b}"))),
            ln1: [p("ln1.g"), p("ln1.b")],
            ffn: [p("ffn.w1"), p("ffn.b1"), p("ffn.w2"), p("ffn.b2")],
            ln2: [p("ln2.g"), p("ln2.b")],
        }
    }
}

struct LayerCache {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    ln1: LayerNormCache,
    x1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
    ln2: LayerNormCache,
}

/// Activations saved by [`Transformer::forward`] for the backward pass.
pub struct TransformerCache {
    ids: Vec<usize>,
    emb_ln: LayerNormCache,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

impl TransformerCache {
    pub fn content_len(&self) -> usize {
        self.ids.len()
    }

    /// Attention probabilities of one head, `content_len x content_len`.
    pub fn attention(&self, layer: usize, head: usize) -> &Array2<f64> {
        &self.layers[layer].probs[head]
    }
}

pub struct TransformerPass {
    /// `max_len x hidden_dim`; rows at padded positions are zero.
    pub hidden: Array2<f64>,
    pub cache: TransformerCache,
}

pub struct Transformer {
    cfg: EncoderConfig,
    names: Vec<LayerNames>,
}

fn add_bias(mut x: Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x += b;
    x
}

fn col_sum(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

impl Transformer {
    pub fn new(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != EncoderKind::Transformer {
            return Err(Error::Config("not a transformer configuration".into()));
        }
        Ok(Transformer {
            cfg: cfg.clone(),
            names: (0..cfg.layers).map(LayerNames::new).collect(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn forward(&self, p: &ParamSet, input: &EncodedInput, mut mode: Mode<'_>) -> Result<TransformerPass> {
        let cfg = &self.cfg;
        if input.max_len() != cfg.max_len {
            return Err(Error::Shape(format!(
                "input length {} but encoder max_len {}",
                input.max_len(),
                cfg.max_len
            )));
        }
        input.validate(cfg.vocab_size)?;
        let n = input.content_len();
        let h = cfg.hidden_dim;
        let ids = input.ids[..n].to_vec();

        let tok = &p["tok_emb"];
        let mut x = p["pos_emb"].slice(s![..n, ..]).to_owned();
        for (row, &id) in x.rows_mut().into_iter().zip(&ids) {
            let mut row = row;
            row += &tok.row(id);
        }
        let (x, emb_ln) = layer_norm(&x, &p["emb_ln.g"], &p["emb_ln.b"]);
        let emb_drop = mode.dropout_mask(cfg.dropout, (n, h));
        let mut x = apply_mask(x, &emb_drop);

        let heads = cfg.heads;
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.layers);
        for names in &self.names {
            let proj = |i: usize| add_bias(x.dot(&p[&names.w[i]]), &p[&names.b[i]]);
            let (q, k, v) = (proj(0), proj(1), proj(2));
            let mut ctx = Array2::zeros((n, h));
            let mut probs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                let pr = softmax_rows(scores.view());
                ctx.slice_mut(cols).assign(&pr.dot(&v.slice(cols)));
                probs.push(pr);
            }
            let attn = add_bias(ctx.dot(&p[&names.w[3]]), &p[&names.b[3]]);
            let attn_drop = mode.dropout_mask(cfg.dropout, (n, h));
            let attn = apply_mask(attn, &attn_drop);
            let (x1, ln1) = layer_norm(&(&x + &attn), &p[&names.ln1[0]], &p[&names.ln1[1]]);

            let pre_act = add_bias(x1.dot(&p[&names.ffn[0]]), &p[&names.ffn[1]]);
            let act = pre_act.mapv(gelu);
            let ffn = add_bias(act.dot(&p[&names.ffn[2]]), &p[&names.ffn[3]]);
            let ffn_drop = mode.dropout_mask(cfg.dropout, (n, h));
            let ffn = apply_mask(ffn, &ffn_drop);
            let (x2, ln2) = layer_norm(&(&x1 + &ffn), &p[&names.ln2[0]], &p[&names.ln2[1]]);

            layers.push(LayerCache {
                x_in: std::mem::replace(&mut x, x2),
                q,
                k,
                v,
                probs,
                ctx,
                attn_drop,
                ln1,
                x1,
                pre_act,
                act,
                ffn_drop,
                ln2,
            });
        }

        let mut hidden = Array2::zeros((cfg.max_len, h));
        hidden.slice_mut(s![..n, ..]).assign(&x);
        Ok(TransformerPass {
            hidden,
            cache: TransformerCache {
                ids,
                emb_ln,
                emb_drop,
                layers,
            },
        })
    }

    /// Accumulates into `grads` the gradient of a scalar whose derivative
    /// with respect to the hidden states is `d_hidden` (`max_len x H`;
    /// rows at padded positions are ignored).
    pub fn backward(&self, p: &ParamSet, cache: &TransformerCache, d_hidden: ArrayView2<f64>, grads: &mut ParamSet) {
        let n = cache.ids.len();
        let h = self.cfg.hidden_dim;
        let heads = self.cfg.heads;
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dx = d_hidden.slice(s![..n, ..]).to_owned();

        for (names, c) in self.names.iter().zip(&cache.layers).rev() {
            let (dsum2, dg, db) = layer_norm_backward(&dx, &p[&names.ln2[0]], &c.ln2);
            grads[&names.ln2[0]] += &dg;
            grads[&names.ln2[1]] += &db;
            let dffn = apply_mask(dsum2.clone(), &c.ffn_drop);
            grads[&names.ffn[3]] += &col_sum(&dffn);
            grads[&names.ffn[2]] += &c.act.t().dot(&dffn);
            let dact = dffn.dot(&p[&names.ffn[2]].t());
            let dpre = dact * &c.pre_act.mapv(gelu_grad);
            grads[&names.ffn[1]] += &col_sum(&dpre);
            grads[&names.ffn[0]] += &c.x1.t().dot(&dpre);
            let dx1 = dsum2 + dpre.dot(&p[&names.ffn[0]].t());

            let (dsum1, dg, db) = layer_norm_backward(&dx1, &p[&names.ln1[0]], &c.ln1);
            grads[&names.ln1[0]] += &dg;
            grads[&names.ln1[1]] += &db;
            let dattn = apply_mask(dsum1.clone(), &c.attn_drop);
            grads[&names.b[3]] += &col_sum(&dattn);
            grads[&names.w[3]] += &c.ctx.t().dot(&dattn);
            let dctx = dattn.dot(&p[&names.w[3]].t());

            let mut dq = Array2::zeros((n, h));
            let mut dk = Array2::zeros((n, h));
            let mut dv = Array2::zeros((n, h));
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let pr = &c.probs[hd];
                let dctx_h = dctx.slice(cols);
                let dp = dctx_h.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&pr.t().dot(&dctx_h));
                let ds = softmax_rows_backward(pr, &dp) * scale;
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            let mut dx_in = dsum1;
            for (i, d) in [dq, dk, dv].iter().enumerate() {
                grads[&names.b[i]] += &col_sum(d);
                grads[&names.w[i]] += &c.x_in.t().dot(d);
                dx_in += &d.dot(&p[&names.w[i]].t());
            }
            dx = dx_in;
        }

        let dx = apply_mask(dx, &cache.emb_drop);
        let (demb, dg, db) = layer_norm_backward(&dx, &p["emb_ln.g"], &cache.emb_ln);
        grads["emb_ln.g"] += &dg;
        grads["emb_ln.b"] += &db;
        {
            let dpos = &mut grads["pos_emb"];
            let mut top = dpos.slice_mut(s![..n, ..]);
            top += &demb;
        }
        let dtok = &mut grads["tok_emb"];
        for (row, &id) in demb.rows().into_iter().zip(&cache.ids) {
            let mut r = dtok.row_mut(id);
            r += &row;
        }
    }
}

/// Pair representation: the hidden row at `[E1]` followed by the
/// hidden row at `[E2]`.
pub fn entity_pair_repr(
    hidden: ArrayView2<f64>,
    e1_pos: usize,
    e2_pos: usize,
    attention_mask: &[u8],
) -> Result<Array1<f64>> {
    for pos in [e1_pos, e2_pos] {
        if attention_mask.get(pos) != Some(&1) || pos >= hidden.nrows() {
            return Err(Error::Shape(format!("entity position {pos} is padded or out of range")));
        }
    }
    let h = hidden.ncols();
    let mut out = Array1::zeros(2 * h);
    out.slice_mut(s![..h]).assign(&hidden.row(e1_pos));
    out.slice_mut(s![h..]).assign(&hidden.row(e2_pos));
    Ok(out)
}

/// Adjoint of [`entity_pair_repr`]: scatters `d_repr` into `d_hidden`.
pub fn entity_pair_repr_backward(d_repr: &Array1<f64>, e1_pos: usize, e2_pos: usize, d_hidden: &mut Array2<f64>) {
    let h = d_hidden.ncols();
    let mut r1 = d_hidden.row_mut(e1_pos);
    r1 += &d_repr.slice(s![..h]);
    let mut r2 = d_hidden.row_mut(e2_pos);
    r2 += &d_repr.slice(s![h..]);
}
