//! AdamW with decoupled weight decay, and plain SGD.
//!
//! ```text
//! p -= lr * wd * p                    (matrices only)
//! m  = b1 * m + (1 - b1) * g
//! v  = b2 * v + (1 - b2) * g^2
//! p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! ```
//!
//! Weight decay skips tensors with a single row (biases and layer-norm
//! parameters).

use serde::{Deserialize, Serialize};

use crate::encoder::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Adamw,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adamw,
            lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Self {
        OptimizerState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One update of `params` from `grads`. Clipping, when configured, is
    /// applied to `grads` in place first.
    pub fn step(&mut self, params: &mut ParamSet, grads: &mut ParamSet) -> Result<()> {
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        if let Some(max) = self.config.clip_norm {
            clip_global_norm(grads, max);
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!("gradient shape of {name}")));
            }
            let decay = if p.nrows() > 1 { c.weight_decay } else { 0.0 };
            match c.algorithm {
                Algorithm::Sgd => {
                    if decay > 0.0 {
                        p.mapv_inplace(|x| x * (1.0 - c.lr * decay));
                    }
                    p.scaled_add(-c.lr, g);
                }
                Algorithm::Adamw => {
                    if !self.m.contains(name) {
                        self.m.insert(name, ndarray::Array2::zeros(p.raw_dim()));
                        self.v.insert(name, ndarray::Array2::zeros(p.raw_dim()));
                    }
                    let m = &mut self.m[name];
                    let v = &mut self.v[name];
                    ndarray::Zip::from(&mut *p)
                        .and(g)
                        .and(&mut *m)
                        .and(&mut *v)
                        .for_each(|p, &g, m, v| {
                            *p -= c.lr * decay * *p;
                            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                            *p -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                        });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn scalar(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", array![[x]]);
        p
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut p = ParamSet::new();
        p.insert("w", Array2::from_elem((3, 2), 0.7));
        let before = p.clone();
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(cfg, &p);
        let mut g = p.zeros_like();
        opt.step(&mut p, &mut g).unwrap();
        assert!(p.bit_identical(&before));
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn single_adamw_step() {
        let mut p = scalar(0.5);
        let cfg = OptimizerConfig {
            lr: 0.1,
            weight_decay: 0.0,
            clip_norm: None,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(cfg, &p);
        opt.step(&mut p, &mut scalar(1.0)).unwrap();
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1 -> delta = -0.1 / (1 + 1e-8)
        let expected = 0.5 - 0.1 / (1.0 + 1e-8);
        assert!((p["w"][(0, 0)] - expected).abs() < 1e-15);
        assert!((p["w"][(0, 0)] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn sgd_step_and_clipping() {
        let mut p = scalar(1.0);
        let cfg = OptimizerConfig {
            algorithm: Algorithm::Sgd,
            lr: 0.5,
            weight_decay: 0.0,
            clip_norm: Some(1.0),
            ..Default::default()
        };
        let mut opt = OptimizerState::new(cfg, &p);
        opt.step(&mut p, &mut scalar(4.0)).unwrap();
        assert!((p["w"][(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &p);
        let err = opt.step(&mut p, &mut scalar(f64::INFINITY)).unwrap_err();
        assert!(err.to_string().contains('w'));
    }
}
