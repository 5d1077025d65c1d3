use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Matrix;
use crate::backbone::{Vocabulary, CLS, PAD};
use crate::error::{GleeError, Result};
use crate::heads::Template;
use crate::model::Inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Labeled token sequences of one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub sequences: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Corpus {
    pub fn new(sequences: Vec<Vec<u32>>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if sequences.len() != labels.len() {
            return Err(GleeError::dim(
                "Corpus::new",
                format!("{} sequences, {} labels", sequences.len(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(GleeError::Index {
                what: "class",
                index: bad,
                bound: num_classes,
            });
        }
        Ok(Corpus {
            sequences,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.num_classes)
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> Corpus {
        Corpus {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split,
        }
    }

    /// Re-renders every example through `template` (so each carries one `[MASK]`).
    pub fn rendered(&self, template: &Template, vocab: &Vocabulary, max_len: usize) -> Result<Corpus> {
        let sequences = self
            .sequences
            .iter()
            .map(|s| template.encode_ids(s, vocab, max_len))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            sequences,
            ..self.clone()
        })
    }

    /// One example per line: `class<TAB>tok tok tok`.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut s = String::new();
        for (seq, &label) in self.sequences.iter().zip(&self.labels) {
            let body: Vec<u32> = seq.iter().copied().filter(|&t| t != CLS && t != PAD).collect();
            let _ = writeln!(s, "{label}\t{}", vocab.detokenize(&body));
        }
        s
    }

    pub fn from_text(text: &str, vocab: &Vocabulary, max_len: usize, num_classes: usize, split: Split) -> Result<Self> {
        let mut sequences = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label, body) = line.split_once('\t').ok_or_else(|| {
                GleeError::config("corpus", format!("line {}: expected `class<TAB>tokens`", lineno + 1))
            })?;
            let label: usize = label.trim().parse().map_err(|_| {
                GleeError::config("corpus", format!("line {}: bad class {label:?}", lineno + 1))
            })?;
            labels.push(label);
            sequences.push(vocab.tokenize(body, max_len)?);
        }
        Corpus::new(sequences, labels, num_classes, split)
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        fs::write(path, self.to_text(vocab)).map_err(|e| GleeError::io(path, e))
    }

    pub fn load(path: &Path, vocab: &Vocabulary, max_len: usize, num_classes: usize, split: Split) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GleeError::io(path, e))?;
        Corpus::from_text(&text, vocab, max_len, num_classes, split)
    }
}

pub fn class_counts(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Train/dev/test corpora drawn from one generator run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

impl SplitCorpus {
    pub fn num_classes(&self) -> usize {
        self.train.num_classes
    }

    pub fn rendered(&self, template: &Template, vocab: &Vocabulary, max_len: usize) -> Result<SplitCorpus> {
        Ok(SplitCorpus {
            train: self.train.rendered(template, vocab, max_len)?,
            dev: self.dev.rendered(template, vocab, max_len)?,
            test: self.test.rendered(template, vocab, max_len)?,
        })
    }
}

/// Model-ready examples: token sequences or precomputed representations.
#[derive(Debug, Clone, PartialEq)]
pub enum ExampleInputs {
    Tokens(Vec<Vec<u32>>),
    Features(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub inputs: ExampleInputs,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_inputs(&self) -> Inputs<'_> {
        match &self.inputs {
            ExampleInputs::Tokens(t) => Inputs::Tokens(t),
            ExampleInputs::Features(m) => Inputs::Features(m),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        let inputs = match &self.inputs {
            ExampleInputs::Tokens(t) => ExampleInputs::Tokens(indices.iter().map(|&i| t[i].clone()).collect()),
            ExampleInputs::Features(m) => ExampleInputs::Features(m.select_rows(indices)),
        };
        LabeledSet {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.num_classes)
    }
}

impl From<&Corpus> for LabeledSet {
    fn from(c: &Corpus) -> Self {
        LabeledSet {
            inputs: ExampleInputs::Tokens(c.sequences.clone()),
            labels: c.labels.clone(),
            num_classes: c.num_classes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let vocab = Vocabulary::new(["a", "b", "c"]).unwrap();
        let c = Corpus::new(vec![vec![2, 4, 5, 0], vec![2, 6, 0, 0]], vec![1, 0], 2, Split::Train).unwrap();
        let text = c.to_text(&vocab);
        assert_eq!(text, "1\ta b\n0\tc\n");
        assert_eq!(Corpus::from_text(&text, &vocab, 4, 2, Split::Train).unwrap(), c);
    }

    #[test]
    fn labels_checked() {
        assert!(Corpus::new(vec![vec![2]], vec![3], 2, Split::Train).is_err());
        assert!(Corpus::new(vec![vec![2]], vec![], 2, Split::Train).is_err());
    }
}
