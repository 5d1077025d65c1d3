//! Deterministic finetuning loop, optimizer and checkpoints.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{
    load_backbone, load_checkpoint, load_model, save_backbone, save_checkpoint, save_model, Checkpoint,
};
pub use optim::{AdamW, Moments};
pub use train::{clip_gradients, resume, train, warmup_lr, EpochLog, TrainConfig, TrainLog, TrainState};
