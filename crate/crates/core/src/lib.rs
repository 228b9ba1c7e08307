//! Relational contrastive pre-training for relation extraction at desk scale.
//!
//! The pipeline runs from a pre-linked corpus through distant supervision,
//! entity-marker input formats and `[BLANK]` masking, to a small transformer
//! trained with an in-batch contrastive objective plus masked language
//! modeling, and finally to supervised and few-shot evaluation.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod objectives;
pub mod rng;
pub mod sampler;
pub mod tasks;
pub mod textproc;

pub use error::{Error, Result};
