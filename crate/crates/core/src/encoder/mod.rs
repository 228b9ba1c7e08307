//! Differentiable sentence encoders: a small transformer pooled at the entity
//! markers and a CNN baseline, both with exact gradients.

mod checkpoint;
mod cnn;
mod gradcheck;
pub mod ops;
mod params;
mod transformer;

use ndarray::{Array1, Array2};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use cnn::{cnn_backward, cnn_forward, CnnCache, CnnInput};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use params::{init_params, register_normal, CnnConfig, EncoderConfig, EncoderKind, ParamSet, Precision, INIT_STD};
pub use transformer::{
    entity_pair_repr, entity_pair_repr_backward, Mode, Transformer, TransformerCache, TransformerPass,
};

use crate::error::{Error, Result};
use crate::textproc::EncodedInput;

/// Encoder input for either architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelInput {
    Transformer(EncodedInput),
    Cnn(CnnInput),
}

/// What [`Encoder::represent`] keeps for the backward pass.
pub enum ReprCache {
    Transformer {
        cache: TransformerCache,
        e1: usize,
        e2: usize,
    },
    Cnn(CnnCache),
}

/// Either encoder behind one representation interface: the entity-pair
/// representation for the transformer, the pooled vector for the CNN.
pub struct Encoder {
    cfg: EncoderConfig,
    transformer: Option<Transformer>,
}

impl Encoder {
    pub fn new(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let transformer = match cfg.kind {
            EncoderKind::Transformer => Some(Transformer::new(cfg)?),
            EncoderKind::Cnn => None,
        };
        Ok(Encoder {
            cfg: cfg.clone(),
            transformer,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn transformer(&self) -> Option<&Transformer> {
        self.transformer.as_ref()
    }

    pub fn represent(&self, p: &ParamSet, input: &ModelInput, mode: Mode<'_>) -> Result<(Array1<f64>, ReprCache)> {
        match (input, &self.transformer) {
            (ModelInput::Transformer(enc), Some(t)) => {
                let pass = t.forward(p, enc, mode)?;
                let repr = entity_pair_repr(pass.hidden.view(), enc.e1_pos, enc.e2_pos, &enc.attention_mask)?;
                Ok((
                    repr,
                    ReprCache::Transformer {
                        cache: pass.cache,
                        e1: enc.e1_pos,
                        e2: enc.e2_pos,
                    },
                ))
            }
            (ModelInput::Cnn(inp), None) => {
                let (v, cache) = cnn_forward(&self.cfg, p, inp)?;
                Ok((v, ReprCache::Cnn(cache)))
            }
            _ => Err(Error::Config("input kind does not match the encoder".into())),
        }
    }

    pub fn represent_backward(&self, p: &ParamSet, cache: &ReprCache, d_repr: &Array1<f64>, grads: &mut ParamSet) {
        match (cache, &self.transformer) {
            (ReprCache::Transformer { cache, e1, e2 }, Some(t)) => {
                let mut d_hidden = Array2::zeros((self.cfg.max_len, self.cfg.hidden_dim));
                entity_pair_repr_backward(d_repr, *e1, *e2, &mut d_hidden);
                t.backward(p, cache, d_hidden.view(), grads);
            }
            (ReprCache::Cnn(c), None) => cnn_backward(&self.cfg, p, c, d_repr, grads),
            _ => unreachable!("cache produced by a different encoder"),
        }
    }
}
