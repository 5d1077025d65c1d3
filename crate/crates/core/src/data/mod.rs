//! Corpora, synthetic long-tailed generation, head/tail splitting,
//! few-shot sampling and external feature files.

mod corpus;
mod features;
mod fewshot;
mod generate;
mod split;

pub use corpus::{class_counts, Corpus, ExampleInputs, LabeledSet, Split, SplitCorpus};
pub use features::{decode_features, encode_features, ingest_features, write_features, FeatureSet};
pub use fewshot::{sample_fewshot, sample_fewshot_indices, DEFAULT_SHOTS, FEWSHOT_BATCH_SIZE};
pub use generate::{generate_longtail, longtail_counts, synthetic_task, LongTailConfig, SYNTHETIC_TEMPLATE};
pub use split::{compute_head_tail, frequency_order, stratified_indices, HeadTailSplit};
