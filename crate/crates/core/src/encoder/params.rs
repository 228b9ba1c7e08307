use std::collections::BTreeMap;
use std::ops::{Index, IndexMut};

use ndarray::{Array2, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Transformer,
    Cnn,
}

/// Arithmetic precision of stored parameters. Computation always runs in
/// 64-bit; `F32` rounds parameters to single precision after init and after
/// every optimizer step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub window: usize,
    pub filters: usize,
    pub word_dim: usize,
    pub position_dim: usize,
    pub clip: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            window: 3,
            filters: 230,
            word_dim: 50,
            position_dim: 5,
            clip: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub precision: Precision,
    pub cnn: CnnConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Transformer,
            vocab_size: 0,
            hidden_dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 64,
            dropout: 0.0,
            precision: Precision::F64,
            cnn: CnnConfig::default(),
        }
    }
}

impl EncoderConfig {
    pub fn transformer(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be at least 1".into());
        }
        if self.max_len < 8 {
            return bad(format!("max_len {} below 8", self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match self.kind {
            EncoderKind::Transformer => {
                if [self.hidden_dim, self.layers, self.heads, self.ffn_dim].contains(&0) {
                    return bad("transformer dimensions must be positive".into());
                }
                if !self.hidden_dim.is_multiple_of(self.heads) {
                    return bad(format!(
                        "hidden_dim {} not divisible by heads {}",
                        self.hidden_dim, self.heads
                    ));
                }
            }
            EncoderKind::Cnn => {
                let c = &self.cnn;
                if [c.window, c.filters, c.word_dim, c.position_dim].contains(&0) {
                    return bad("cnn dimensions must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Width of the representation handed to task heads.
    pub fn repr_dim(&self) -> usize {
        match self.kind {
            EncoderKind::Transformer => 2 * self.hidden_dim,
            EncoderKind::Cnn => self.cnn.filters,
        }
    }
}

/// Named dense parameter tensors. Vectors are stored as `1 x n` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Array2<f64>> {
        self.tensors.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.values().map(Array2::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.raw_dim())))
                .collect(),
        }
    }

    /// `self += alpha * other` over the tensors both sets share.
    pub fn add_scaled(&mut self, other: &ParamSet, alpha: f64) {
        for (k, v) in &mut self.tensors {
            if let Some(o) = other.tensors.get(k) {
                v.scaled_add(alpha, o);
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.tensors.values_mut() {
            v.mapv_inplace(|x| x * alpha);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|v| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// First tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(k, _)| k.as_str())
    }

    pub fn round_to_f32(&mut self) {
        for v in self.tensors.values_mut() {
            v.mapv_inplace(|x| x as f32 as f64);
        }
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_identical(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((ka, a), (kb, b))| {
                ka == kb && a.shape() == b.shape() && Zip::from(a).and(b).all(|x, y| x.to_bits() == y.to_bits())
            })
    }
}

impl Index<&str> for ParamSet {
    type Output = Array2<f64>;

    fn index(&self, name: &str) -> &Array2<f64> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not registered"))
    }
}

impl IndexMut<&str> for ParamSet {
    fn index_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("parameter {name} not registered"))
    }
}

pub const INIT_STD: f64 = 0.02;

/// Tensor names and shapes for a configuration, with whether each is a
/// layer-norm scale (initialized to one), a bias/offset (zero) or a weight
/// (normal).
pub(crate) fn layout(cfg: &EncoderConfig) -> Vec<(String, (usize, usize), Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, shape, init| out.push((name, shape, init));
    match cfg.kind {
        EncoderKind::Transformer => {
            let (h, f, v, l) = (cfg.hidden_dim, cfg.ffn_dim, cfg.vocab_size, cfg.max_len);
            push("tok_emb".into(), (v, h), Init::Normal);
            push("pos_emb".into(), (l, h), Init::Normal);
            push("emb_ln.g".into(), (1, h), Init::One);
            push("emb_ln.b".into(), (1, h), Init::Zero);
            for i in 0..cfg.layers {
                let p = |s: &str| format!("layer{i}.{s}");
                for w in ["q", "k", "v", "o"] {
                    push(p(&format!("attn.w{w}")), (h, h), Init::Normal);
                    push(p(&format!("attn.b{w}")), (1, h), Init::Zero);
                }
                push(p("ln1.g"), (1, h), Init::One);
                push(p("ln1.b"), (1, h), Init::Zero);
                push(p("ffn.w1"), (h, f), Init::Normal);
                push(p("ffn.b1"), (1, f), Init::Zero);
                push(p("ffn.w2"), (f, h), Init::Normal);
                push(p("ffn.b2"), (1, h), Init::Zero);
                push(p("ln2.g"), (1, h), Init::One);
                push(p("ln2.b"), (1, h), Init::Zero);
            }
        }
        EncoderKind::Cnn => {
            let c = &cfg.cnn;
            let positions = 2 * c.clip + 1;
            push("cnn.tok_emb".into(), (cfg.vocab_size, c.word_dim), Init::Normal);
            push("cnn.pos_head".into(), (positions, c.position_dim), Init::Normal);
            push("cnn.pos_tail".into(), (positions, c.position_dim), Init::Normal);
            let width = c.window * (c.word_dim + 2 * c.position_dim);
            push("cnn.conv.w".into(), (width, c.filters), Init::Normal);
            push("cnn.conv.b".into(), (1, c.filters), Init::Zero);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Normal,
    One,
    Zero,
}

/// Deterministic initialization: weights and embeddings from N(0, 0.02²),
/// biases zero, layer-norm scales one. Tensors are filled in name order from
/// a single stream.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut specs = layout(cfg);
    specs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rng = rng::stream(seed, tag::INIT, 0);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut params = ParamSet::new();
    for (name, shape, init) in specs {
        let t = match init {
            Init::Normal => Array2::from_shape_simple_fn(shape, || normal.sample(&mut rng)),
            Init::One => Array2::ones(shape),
            Init::Zero => Array2::zeros(shape),
        };
        params.insert(name, t);
    }
    if cfg.precision == Precision::F32 {
        params.round_to_f32();
    }
    Ok(params)
}

/// Adds a tensor drawn from N(0, 0.02²) under `name`, used by task heads.
pub fn register_normal(params: &mut ParamSet, name: &str, shape: (usize, usize), seed: u64, stream: u64) {
    let mut rng = rng::stream(seed, tag::INIT, stream);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    params.insert(name, Array2::from_shape_simple_fn(shape, || normal.sample(&mut rng)));
}
