use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoder::{
    encode, encode_backward, BackboneParams, Provenance, P_EMBEDDING, P_MLM_DENSE_B, P_MLM_DENSE_W,
    P_MLM_LN_B, P_MLM_LN_G,
};
use super::vocab::{is_special, MASK};
use crate::autodiff::{softmax_cross_entropy, Activation, Gradients, Matrix};
use crate::error::{GleeError, Result};
use crate::heads::{Stack, StackNames};
use crate::trainer::AdamW;

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub dim: usize,
    pub vocab_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: super::DEFAULT_DIM,
            vocab_size: super::DEFAULT_VOCAB,
            epochs: 20,
            batch_size: 32,
            learning_rate: 3e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: BackboneParams,
    /// Mean masked-token loss of the untrained backbone over the first epoch's batches.
    pub initial_loss: f64,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

const MLM_NAMES: StackNames = StackNames {
    dense_w: P_MLM_DENSE_W,
    dense_b: P_MLM_DENSE_B,
    ln_gamma: P_MLM_LN_G,
    ln_beta: P_MLM_LN_B,
};

fn mlm_stack(p: &BackboneParams) -> Stack<'_> {
    Stack {
        dense: &p.mlm_dense,
        activation: Activation::Gelu,
        ln: Some(&p.mlm_ln),
    }
}

/// Replaces one random non-special token per sequence with `[MASK]`.
/// Sequences without a maskable token are skipped.
fn mask_batch<R: Rng>(seqs: &[&Vec<u32>], rng: &mut R) -> (Vec<Vec<u32>>, Vec<usize>) {
    let mut inputs = Vec::with_capacity(seqs.len());
    let mut targets = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let candidates: Vec<usize> = (0..seq.len()).filter(|&i| !is_special(seq[i])).collect();
        if candidates.is_empty() {
            continue;
        }
        let pos = candidates[rng.gen_range(0..candidates.len())];
        let mut masked = (*seq).clone();
        targets.push(masked[pos] as usize);
        masked[pos] = MASK;
        inputs.push(masked);
    }
    (inputs, targets)
}

/// Masked-token loss and gradients through encoder → MLM dense → GELU →
/// LN → embeddingᵀ.
fn mlm_step(p: &BackboneParams, inputs: &[Vec<u32>], targets: &[usize]) -> Result<(f64, Gradients, Matrix)> {
    let enc = encode(inputs, p)?;
    let repr = enc
        .mask_repr
        .as_ref()
        .ok_or_else(|| GleeError::InputStructure("masked batch without [MASK]".into()))?;
    let stack = mlm_stack(p);
    let (feats, cache) = stack.forward(repr)?;
    let logits = feats.matmul_t(&p.embedding)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, targets)?;
    let mut grads = Gradients::new();
    // Tied predictor: its gradient accumulates into the embedding table.
    grads.accumulate(P_EMBEDDING, &dlogits.t_matmul(&feats)?)?;
    let dfeats = dlogits.matmul(&p.embedding)?;
    let drepr = stack.backward(&cache, &dfeats, MLM_NAMES, &mut grads)?;
    encode_backward(p, &enc, None, Some(&drepr), &mut grads)?;
    // The [PAD] row stays zero.
    if let Some(g) = grads.get_mut(P_EMBEDDING) {
        g.row_mut(0).fill(0.0);
    }
    Ok((loss, grads, logits))
}

/// Synthetic MLM pretraining: one masked token per sequence, tied predictor.
pub fn mlm_pretrain(sequences: &[Vec<u32>], config: &PretrainConfig, seed: u64) -> Result<PretrainOutcome> {
    if sequences.is_empty() {
        return Err(GleeError::config("corpus", "pretraining corpus is empty"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(GleeError::config("pretrain", "batch_size and epochs must be positive"));
    }
    let mut params = BackboneParams::random(config.vocab_size, config.dim, seed)?;
    let mut opt = AdamW::new(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut initial_loss = None;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let seqs: Vec<&Vec<u32>> = chunk.iter().map(|&i| &sequences[i]).collect();
            let (inputs, targets) = mask_batch(&seqs, &mut rng);
            if inputs.is_empty() {
                continue;
            }
            let (loss, grads, _) = mlm_step(&params, &inputs, &targets)?;
            if !loss.is_finite() {
                return Err(GleeError::NonFiniteLoss {
                    epoch: epoch_losses.len(),
                    batch: batches,
                    loss,
                });
            }
            if initial_loss.is_none() {
                initial_loss = Some(loss);
            }
            total += loss;
            batches += 1;
            let all = params.all_params_mut();
            opt.step(all, &grads, config.learning_rate, &|_| false)?;
        }
        epoch_losses.push(if batches > 0 { total / batches as f64 } else { f64::NAN });
    }
    params.provenance = Provenance::Pretrained;
    Ok(PretrainOutcome {
        params,
        initial_loss: initial_loss.unwrap_or(f64::NAN),
        epoch_losses,
    })
}

/// Top-1 accuracy of recovering one masked token per sequence.
pub fn masked_token_accuracy(params: &BackboneParams, sequences: &[Vec<u32>], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<&Vec<u32>> = sequences.iter().collect();
    let (inputs, targets) = mask_batch(&seqs, &mut rng);
    if inputs.is_empty() {
        return Err(GleeError::Degenerate("no maskable tokens".into()));
    }
    let (_, _, logits) = mlm_step(params, &inputs, &targets)?;
    let hits = logits
        .argmax_rows()
        .iter()
        .zip(&targets)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / targets.len() as f64)
}
