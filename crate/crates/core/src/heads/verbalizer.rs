use std::collections::BTreeSet;

use crate::autodiff::Matrix;
use crate::backbone::is_special;
use crate::error::{GleeError, Result};

/// Class id → nonempty set of vocabulary token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    classes: Vec<Vec<u32>>,
}

impl Verbalizer {
    pub fn new(classes: Vec<Vec<u32>>, vocab_size: usize) -> Result<Self> {
        if classes.is_empty() {
            return Err(GleeError::Verbalizer("no classes".into()));
        }
        let mut normalized = Vec::with_capacity(classes.len());
        for (c, tokens) in classes.into_iter().enumerate() {
            if tokens.is_empty() {
                return Err(GleeError::Verbalizer(format!("class {c} has no tokens")));
            }
            for &t in &tokens {
                if t as usize >= vocab_size {
                    return Err(GleeError::Verbalizer(format!(
                        "class {c} token {t} outside vocabulary of size {vocab_size}"
                    )));
                }
                if is_special(t) {
                    return Err(GleeError::Verbalizer(format!(
                        "class {c} maps to special token {t}"
                    )));
                }
            }
            // Sets: duplicates inside one class would silently reweight the mean.
            let set: BTreeSet<u32> = tokens.iter().copied().collect();
            normalized.push(set.into_iter().collect());
        }
        Ok(Verbalizer {
            classes: normalized,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn tokens(&self, class: usize) -> &[u32] {
        &self.classes[class]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.classes.iter().map(Vec::as_slice)
    }

    pub fn max_token(&self) -> u32 {
        self.classes.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// Class logit = arithmetic mean of the class's token logits.
pub fn verbalizer_reduce(token_logits: &Matrix, v: &Verbalizer) -> Result<Matrix> {
    if v.max_token() as usize >= token_logits.cols() {
        return Err(GleeError::dim(
            "verbalizer_reduce",
            format!(
                "token {} outside logits of width {}",
                v.max_token(),
                token_logits.cols()
            ),
        ));
    }
    let mut out = Matrix::zeros(token_logits.rows(), v.num_classes());
    for i in 0..token_logits.rows() {
        let row = token_logits.row(i);
        for (c, toks) in v.iter().enumerate() {
            let sum: f64 = toks.iter().map(|&t| row[t as usize]).sum();
            out[(i, c)] = sum / toks.len() as f64;
        }
    }
    Ok(out)
}

/// Scatters class-logit gradients back onto token logits of width `vocab_size`.
pub fn verbalizer_reduce_backward(d_class: &Matrix, v: &Verbalizer, vocab_size: usize) -> Matrix {
    let mut out = Matrix::zeros(d_class.rows(), vocab_size);
    for i in 0..d_class.rows() {
        for (c, toks) in v.iter().enumerate() {
            let g = d_class[(i, c)] / toks.len() as f64;
            for &t in toks {
                out[(i, t as usize)] += g;
            }
        }
    }
    out
}
