//! Laboratory for comparing classifier-head finetuning and prompt-based
//! finetuning on long-tailed classification, over a tiny trainable
//! masked-language-model backbone.

pub mod analysis;
pub mod autodiff;
pub mod backbone;
pub mod cli;
pub mod data;
pub mod error;
pub mod format;
pub mod heads;
pub mod model;
pub mod objectives;
pub mod trainer;

pub use error::{GleeError, Result};
