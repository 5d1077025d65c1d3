use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{Split, SplitCorpus};
use crate::error::{GleeError, Result};

pub const DEFAULT_SHOTS: usize = 32;
/// Batch size used for few-shot training.
pub const FEWSHOT_BATCH_SIZE: usize = 2;

/// Draws `k` training and `k` disjoint dev examples uniformly without
/// replacement from the training split; the test split is kept as is.
pub fn sample_fewshot(corpus: &SplitCorpus, k: usize, seed: u64) -> Result<SplitCorpus> {
    let (train, dev) = sample_fewshot_indices(corpus.train.len(), k, seed)?;
    Ok(SplitCorpus {
        train: corpus.train.subset(&train, Split::Train),
        dev: corpus.train.subset(&dev, Split::Dev),
        test: corpus.test.clone(),
    })
}

/// The index draw behind [`sample_fewshot`]: `k` train and `k` dev positions
/// out of `n`.
pub fn sample_fewshot_indices(n: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if k == 0 || 2 * k > n {
        return Err(GleeError::config(
            "data.fewshot_k",
            format!("need 0 < 2k <= {n} training examples, got k={k}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, 2 * k).into_vec();
    let dev = picked.split_off(k);
    Ok((picked, dev))
}
