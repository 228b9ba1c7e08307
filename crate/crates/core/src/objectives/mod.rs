//! Training objectives: the in-batch contrastive loss, masked-token
//! prediction, the same-entity-pair (MTB) baseline loss, optimizers and the
//! pre-training loop.

mod batch;
mod losses;
mod mlm;
mod mlm_stage;
mod optim;
mod pretrain;

pub use batch::{batch_cp_loss, batch_mtb_loss, BatchOptions, LossBreakdown};
pub use losses::{cp_loss, cp_loss_from_logits, in_batch_cp, mtb_loss, mtb_loss_from_logit};
pub use mlm::{ensure_mlm_head, mlm_loss, mlm_terms, MlmTerms, MLM_BIAS};
pub use mlm_stage::{mlm_stage, MlmStageConfig};
pub use optim::{clip_global_norm, Algorithm, OptimizerConfig, OptimizerState};
pub use pretrain::{
    loss_csv, pretrain, pretrain_from, pretrain_with_mlm_stage, write_loss_csv, Objective, PretrainConfig,
    PretrainOutput,
};
