//! Token-level transforms between a [`LinkedSentence`](crate::corpus::LinkedSentence)
//! and encoder ids.

mod blank;
mod encode;
mod format;
mod position;
pub mod vocab;

pub use blank::{apply_blank_mask, marker_regions, BlankPolicy};
pub use encode::{encode, mlm_mask, EncodedInput};
pub use format::{format_cm, format_ct, format_onlyc, format_onlym, format_onlyt, InputSetting};
pub use position::position_features;
pub use vocab::Vocab;
