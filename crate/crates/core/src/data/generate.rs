use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{Corpus, Split, SplitCorpus};
use crate::backbone::{Vocabulary, CLS, NUM_SPECIALS, PAD};
use crate::error::{GleeError, Result};
use crate::heads::{Template, Verbalizer};

/// Template used for synthetic prompt inputs.
pub const SYNTHETIC_TEMPLATE: &str = "{x} it was [MASK]";

#[derive(Debug, Clone, PartialEq)]
pub struct LongTailConfig {
    pub num_classes: usize,
    /// Power-law exponent of the class shares; 0 gives balanced classes.
    pub exponent: f64,
    pub total: usize,
    /// Sequence length including `[CLS]`.
    pub max_len: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a word is drawn from the class's topic tokens.
    pub signal_rate: f64,
    /// Topic tokens per class, verbalizer tokens included.
    pub topic_size: usize,
}

impl Default for LongTailConfig {
    fn default() -> Self {
        LongTailConfig {
            num_classes: 20,
            exponent: 1.5,
            total: 2000,
            max_len: 20,
            min_words: 8,
            max_words: 16,
            signal_rate: 0.3,
            topic_size: 4,
        }
    }
}

impl LongTailConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(GleeError::config("data.classes", "need at least 2 classes"));
        }
        if !(self.exponent.is_finite() && self.exponent >= 0.0) {
            return Err(GleeError::config("data.exponent", "must be finite and non-negative"));
        }
        if self.total < self.num_classes {
            return Err(GleeError::config(
                "data.total",
                format!("{} examples cannot cover {} classes", self.total, self.num_classes),
            ));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(GleeError::config("data.min_words", "need 0 < min_words <= max_words"));
        }
        if self.max_words + 1 > self.max_len {
            return Err(GleeError::config("data.max_len", "must hold [CLS] plus max_words"));
        }
        if !(0.0..=1.0).contains(&self.signal_rate) {
            return Err(GleeError::config("data.signal_rate", "must lie in [0, 1]"));
        }
        if self.topic_size == 0 {
            return Err(GleeError::config("data.topic_size", "must be positive"));
        }
        Ok(())
    }
}

/// `⌈total · share_k⌉` with `share_k ∝ (k+1)^(−exponent)`; never below 1.
pub fn longtail_counts(num_classes: usize, exponent: f64, total: usize) -> Vec<usize> {
    let weights: Vec<f64> = (0..num_classes).map(|k| ((k + 1) as f64).powf(-exponent)).collect();
    let sum: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| ((total as f64 * w / sum).ceil() as usize).max(1))
        .collect()
}

/// Vocabulary, verbalizer and template for a synthetic task: the template
/// words `it`/`was`, then `w6`, `w7`, ... Class `c` verbalizes to the
/// `c`-th generic word.
pub fn synthetic_task(num_classes: usize, vocab_size: usize) -> Result<(Vocabulary, Verbalizer, Template)> {
    let first = NUM_SPECIALS as usize + 2;
    if vocab_size < first + num_classes {
        return Err(GleeError::config(
            "backbone.vocab_size",
            format!("{vocab_size} too small for {num_classes} classes"),
        ));
    }
    let mut words = vec!["it".to_string(), "was".to_string()];
    words.extend((first..vocab_size).map(|i| format!("w{i}")));
    let vocab = Vocabulary::new(words)?;
    let verbalizer = Verbalizer::new((0..num_classes).map(|c| vec![(first + c) as u32]).collect(), vocab_size)?;
    Ok((vocab, verbalizer, Template::new(SYNTHETIC_TEMPLATE)?))
}

/// Per-class topic tokens (verbalizer tokens first) and the shared background.
fn topics(config: &LongTailConfig, vocab: &Vocabulary, verbalizer: &Verbalizer) -> Result<(Vec<Vec<u32>>, Vec<u32>)> {
    let reserved: BTreeSet<u32> = verbalizer.iter().flatten().copied().collect();
    let mut pool = (NUM_SPECIALS..vocab.len() as u32).filter(|t| !reserved.contains(t));
    let mut topics = Vec::with_capacity(config.num_classes);
    for c in 0..config.num_classes {
        let mut t: Vec<u32> = verbalizer.tokens(c).to_vec();
        while t.len() < config.topic_size {
            let next = pool.next().ok_or_else(|| {
                GleeError::config("data.topic_size", "vocabulary too small for the topic tokens")
            })?;
            t.push(next);
        }
        topics.push(t);
    }
    let background: Vec<u32> = pool.collect();
    if background.is_empty() {
        return Err(GleeError::config("backbone.vocab_size", "no background words left"));
    }
    Ok((topics, background))
}

/// Sizes of (train, dev, test) for a class with `n` examples: roughly
/// 80/10/10, at least one test example, and train kept nonempty when n ≥ 2.
pub(crate) fn stratum_sizes(n: usize) -> (usize, usize, usize) {
    let tenth = (n as f64 * 0.1).round() as usize;
    let test = tenth.max(1).min(n);
    let dev = tenth.min(n - test).min((n - test).saturating_sub(1));
    (n - test - dev, dev, test)
}

/// Synthetic long-tailed corpus with a stratified 80/10/10 split.
pub fn generate_longtail(
    config: &LongTailConfig,
    vocab: &Vocabulary,
    verbalizer: &Verbalizer,
    seed: u64,
) -> Result<SplitCorpus> {
    config.validate()?;
    if verbalizer.num_classes() != config.num_classes {
        return Err(GleeError::config(
            "verbalizer",
            format!(
                "covers {} classes, config asks for {}",
                verbalizer.num_classes(),
                config.num_classes
            ),
        ));
    }
    let (topics, background) = topics(config, vocab, verbalizer)?;
    let counts = longtail_counts(config.num_classes, config.exponent, config.total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [(Vec<Vec<u32>>, Vec<usize>); 3] = Default::default();
    for (class, &n) in counts.iter().enumerate() {
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let len = rng.gen_range(config.min_words..=config.max_words);
            let mut seq = Vec::with_capacity(config.max_len);
            seq.push(CLS);
            for _ in 0..len {
                let tok = if rng.gen_bool(config.signal_rate) {
                    *topics[class].choose(&mut rng).unwrap()
                } else {
                    *background.choose(&mut rng).unwrap()
                };
                seq.push(tok);
            }
            seq.resize(config.max_len, PAD);
            examples.push(seq);
        }
        let (train, dev, _) = stratum_sizes(n);
        for (i, seq) in examples.into_iter().enumerate() {
            let part = if i < train {
                0
            } else if i < train + dev {
                1
            } else {
                2
            };
            parts[part].0.push(seq);
            parts[part].1.push(class);
        }
    }
    let mut splits = Vec::with_capacity(3);
    for ((seqs, labels), split) in parts.into_iter().zip([Split::Train, Split::Dev, Split::Test]) {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut rng);
        let corpus = Corpus::new(seqs, labels, config.num_classes, Split::Train)?;
        splits.push(corpus.subset(&order, split));
    }
    let test = splits.pop().unwrap();
    let dev = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(SplitCorpus { train, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratum_sizes_cover_small_classes() {
        assert_eq!(stratum_sizes(1), (0, 0, 1));
        assert_eq!(stratum_sizes(2), (1, 0, 1));
        assert_eq!(stratum_sizes(11), (9, 1, 1));
        assert_eq!(stratum_sizes(100), (80, 10, 10));
    }

    #[test]
    fn uniform_limit() {
        let counts = longtail_counts(7, 0.0, 100);
        assert!(counts.iter().all(|&c| (c as f64 - 100.0 / 7.0).abs() <= 1.0));
    }

    #[test]
    fn counts_non_increasing_and_positive() {
        let counts = longtail_counts(30, 2.5, 40);
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        assert!(counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn infeasible_total() {
        let (v, verb, _) = synthetic_task(5, 64).unwrap();
        let cfg = LongTailConfig {
            num_classes: 5,
            total: 4,
            ..LongTailConfig::default()
        };
        assert!(matches!(generate_longtail(&cfg, &v, &verb, 0), Err(GleeError::Config { .. })));
    }
}
