//! Toy stand-in for a pretrained masked language model: whitespace
//! tokenizer, embedding table, mean-pooled residual encoder, and a
//! synthetic MLM pretraining loop.

mod encoder;
mod pretrain;
mod vocab;

pub use encoder::{encode, encode_backward, BackboneParams, EncodedBatch, Provenance, DEFAULT_DIM, DEFAULT_VOCAB, INIT_STD};
pub use pretrain::{masked_token_accuracy, mlm_pretrain, PretrainConfig, PretrainOutcome};
pub use vocab::{is_special, split_words, Vocabulary, CLS, MASK, MAX_VOCAB, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK};

pub(crate) use encoder::P_EMBEDDING;
