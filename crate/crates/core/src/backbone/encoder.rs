use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{MASK, PAD};
use crate::autodiff::{activation_backward, activation_forward, Activation, Gradients, LayerNorm, Linear, Matrix};
use crate::error::{GleeError, Result};

pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_VOCAB: usize = 256;
/// Normal std for dense weights (and the MLM dense layer).
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Random,
    Pretrained,
}

/// Embedding table, residual two-layer GELU encoder and the MLM head's
/// dense layer and layer-norm affinities.
///
/// The MLM predictor is not stored: it is the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub embedding: Matrix,
    pub encoder_in: Linear,
    pub encoder_out: Linear,
    pub mlm_dense: Linear,
    pub mlm_ln: LayerNorm,
    pub provenance: Provenance,
}

pub(crate) const P_EMBEDDING: &str = "embedding";
pub(crate) const P_ENC_IN_W: &str = "encoder.in.weight";
pub(crate) const P_ENC_IN_B: &str = "encoder.in.bias";
pub(crate) const P_ENC_OUT_W: &str = "encoder.out.weight";
pub(crate) const P_ENC_OUT_B: &str = "encoder.out.bias";
pub(crate) const P_MLM_DENSE_W: &str = "mlm.dense.weight";
pub(crate) const P_MLM_DENSE_B: &str = "mlm.dense.bias";
pub(crate) const P_MLM_LN_G: &str = "mlm.ln.gamma";
pub(crate) const P_MLM_LN_B: &str = "mlm.ln.beta";

impl BackboneParams {
    /// Randomly initialized backbone. Embedding rows ~ Normal(0, 1/√d) with
    /// the `[PAD]` row zeroed; dense layers ~ Normal(0, 0.02).
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim < 4 {
            return Err(GleeError::config("backbone.dim", "must be at least 4"));
        }
        if vocab_size <= MASK as usize {
            return Err(GleeError::config("backbone.vocab_size", "must exceed the 4 specials"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embedding = Matrix::random_normal(vocab_size, dim, 1.0 / (dim as f64).sqrt(), &mut rng);
        embedding.row_mut(PAD as usize).fill(0.0);
        Ok(BackboneParams {
            embedding,
            encoder_in: Linear::init(dim, dim, INIT_STD, &mut rng),
            encoder_out: Linear::init(dim, dim, INIT_STD, &mut rng),
            mlm_dense: Linear::init(dim, dim, INIT_STD, &mut rng),
            mlm_ln: LayerNorm::fresh(dim),
            provenance: Provenance::Random,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.cols()
    }

    /// Encoder parameters as `(name, values)`; the MLM-head parts are separate.
    pub(crate) fn encoder_params_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut all = self.all_params_mut();
        all.truncate(5);
        all
    }

    /// Encoder and MLM-head parameters together, as pretraining updates them.
    pub(crate) fn all_params_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let BackboneParams {
            embedding,
            encoder_in,
            encoder_out,
            mlm_dense,
            mlm_ln,
            ..
        } = self;
        vec![
            (P_EMBEDDING, embedding.data_mut()),
            (P_ENC_IN_W, encoder_in.weight.data_mut()),
            (P_ENC_IN_B, &mut encoder_in.bias[..]),
            (P_ENC_OUT_W, encoder_out.weight.data_mut()),
            (P_ENC_OUT_B, &mut encoder_out.bias[..]),
            (P_MLM_DENSE_W, mlm_dense.weight.data_mut()),
            (P_MLM_DENSE_B, &mut mlm_dense.bias[..]),
            (P_MLM_LN_G, &mut mlm_ln.gamma[..]),
            (P_MLM_LN_B, &mut mlm_ln.beta[..]),
        ]
    }

    /// Runs the residual encoder `h = p + GELU(p·W₁ + b₁)·W₂ + b₂` on pooled rows.
    fn run_encoder(&self, pooled: Matrix) -> Result<(Matrix, EncoderPathCache)> {
        let pre = self.encoder_in.forward(&pooled)?;
        let act = activation_forward(&pre, Activation::Gelu);
        let mut out = self.encoder_out.forward(&act)?;
        out.add_assign(&pooled)?;
        Ok((out, EncoderPathCache { pooled, pre, act }))
    }

    fn encoder_backward(
        &self,
        cache: &EncoderPathCache,
        dout: &Matrix,
        grads: &mut Gradients,
    ) -> Result<Matrix> {
        let g_out = self.encoder_out.backward(&cache.act, dout)?;
        grads.accumulate(P_ENC_OUT_W, &g_out.weight)?;
        grads.accumulate_vec(P_ENC_OUT_B, &g_out.bias)?;
        let dpre = activation_backward(&cache.pre, &g_out.input, Activation::Gelu)?;
        let g_in = self.encoder_in.backward(&cache.pooled, &dpre)?;
        grads.accumulate(P_ENC_IN_W, &g_in.weight)?;
        grads.accumulate_vec(P_ENC_IN_B, &g_in.bias)?;
        let mut dpooled = g_in.input;
        dpooled.add_assign(dout)?;
        Ok(dpooled)
    }
}

#[derive(Debug, Clone)]
struct EncoderPathCache {
    pooled: Matrix,
    pre: Matrix,
    act: Matrix,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    tokens: Vec<Vec<u32>>,
    cls_path: EncoderPathCache,
    mask_path: Option<EncoderPathCache>,
}

/// Backbone output for a batch.
///
/// `mask_repr` is present exactly when every example carries one `[MASK]`.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub cls_repr: Matrix,
    pub mask_repr: Option<Matrix>,
    cache: EncoderCache,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.cls_repr.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.cls_repr.rows() == 0
    }
}

/// Mean-pools non-`[PAD]` embeddings and runs the encoder. When the inputs
/// carry `[MASK]`, a second pass adds the `[MASK]` embedding to the pooled
/// vector before encoding to produce `mask_repr`.
pub fn encode(batch: &[Vec<u32>], params: &BackboneParams) -> Result<EncodedBatch> {
    let v = params.vocab_size();
    let d = params.dim();
    let mut tokens = Vec::with_capacity(batch.len());
    let mut mask_counts = Vec::with_capacity(batch.len());
    let mut pooled = Matrix::zeros(batch.len(), d);
    for (i, seq) in batch.iter().enumerate() {
        if let Some(&bad) = seq.iter().find(|&&t| t as usize >= v) {
            return Err(GleeError::Index {
                what: "vocabulary",
                index: bad as usize,
                bound: v,
            });
        }
        let live: Vec<u32> = seq.iter().copied().filter(|&t| t != PAD).collect();
        if live.is_empty() {
            return Err(GleeError::EmptyInput(i));
        }
        mask_counts.push(live.iter().filter(|&&t| t == MASK).count());
        let row = pooled.row_mut(i);
        for &t in &live {
            for (r, e) in row.iter_mut().zip(params.embedding.row(t as usize)) {
                *r += e;
            }
        }
        let inv = 1.0 / live.len() as f64;
        row.iter_mut().for_each(|r| *r *= inv);
        tokens.push(live);
    }

    let prompt_mode = mask_counts.iter().any(|&c| c > 0);
    if prompt_mode {
        if let Some((i, &c)) = mask_counts.iter().enumerate().find(|&(_, &c)| c != 1) {
            return Err(GleeError::InputStructure(format!(
                "example {i} has {c} [MASK] tokens; prompt inputs need exactly one per example"
            )));
        }
    }

    let mask_pooled = prompt_mode.then(|| {
        let mut m = pooled.clone();
        let mask_row = params.embedding.row(MASK as usize).to_vec();
        for i in 0..m.rows() {
            for (r, e) in m.row_mut(i).iter_mut().zip(&mask_row) {
                *r += e;
            }
        }
        m
    });

    let (cls_repr, cls_path) = params.run_encoder(pooled)?;
    let (mask_repr, mask_path) = match mask_pooled {
        Some(p) => {
            let (r, c) = params.run_encoder(p)?;
            (Some(r), Some(c))
        }
        None => (None, None),
    };
    Ok(EncodedBatch {
        cls_repr,
        mask_repr,
        cache: EncoderCache {
            tokens,
            cls_path,
            mask_path,
        },
    })
}

/// Accumulates encoder and embedding gradients given upstream gradients on
/// either representation. The `[PAD]` row never receives gradient.
pub fn encode_backward(
    params: &BackboneParams,
    batch: &EncodedBatch,
    d_cls: Option<&Matrix>,
    d_mask: Option<&Matrix>,
    grads: &mut Gradients,
) -> Result<()> {
    let cache = &batch.cache;
    let mut d_embedding = Matrix::zeros(params.vocab_size(), params.dim());
    let mut scatter = |dpooled: &Matrix, add_mask: bool| {
        for (i, toks) in cache.tokens.iter().enumerate() {
            let g = dpooled.row(i);
            let inv = 1.0 / toks.len() as f64;
            for &t in toks {
                for (e, gv) in d_embedding.row_mut(t as usize).iter_mut().zip(g) {
                    *e += gv * inv;
                }
            }
            if add_mask {
                for (e, gv) in d_embedding.row_mut(MASK as usize).iter_mut().zip(g) {
                    *e += gv;
                }
            }
        }
    };
    if let Some(dc) = d_cls {
        let dpooled = params.encoder_backward(&cache.cls_path, dc, grads)?;
        scatter(&dpooled, false);
    }
    if let Some(dm) = d_mask {
        let path = cache.mask_path.as_ref().ok_or_else(|| {
            GleeError::InputStructure("gradient for mask_repr on a batch without [MASK]".into())
        })?;
        let dpooled = params.encoder_backward(path, dm, grads)?;
        scatter(&dpooled, true);
    }
    d_embedding.row_mut(PAD as usize).fill(0.0);
    grads.accumulate(P_EMBEDDING, &d_embedding)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_backbone(v: usize, d: usize) -> BackboneParams {
        let mut p = BackboneParams::random(v, d, 7).unwrap();
        p.encoder_out.weight = Matrix::zeros(d, d);
        p.encoder_out.bias = vec![0.0; d];
        p
    }

    #[test]
    fn single_token_identity_encoder_returns_embedding() {
        let p = identity_backbone(16, 8);
        let out = encode(&[vec![9, PAD, PAD]], &p).unwrap();
        assert_eq!(out.cls_repr.row(0), p.embedding.row(9));
        assert!(out.mask_repr.is_none());
    }

    #[test]
    fn pad_positions_do_not_matter() {
        let p = BackboneParams::random(16, 8, 3).unwrap();
        let a = encode(&[vec![2, 5, 0, 7, 0]], &p).unwrap();
        let b = encode(&[vec![0, 2, 0, 5, 7]], &p).unwrap();
        assert_eq!(a.cls_repr, b.cls_repr);
    }

    #[test]
    fn errors() {
        let p = BackboneParams::random(16, 8, 3).unwrap();
        assert!(matches!(encode(&[vec![2, 16]], &p), Err(GleeError::Index { index: 16, .. })));
        assert!(matches!(encode(&[vec![2], vec![0, 0]], &p), Err(GleeError::EmptyInput(1))));
        assert!(matches!(
            encode(&[vec![2, MASK], vec![2, 5]], &p),
            Err(GleeError::InputStructure(_))
        ));
        assert!(matches!(
            encode(&[vec![2, MASK, MASK]], &p),
            Err(GleeError::InputStructure(_))
        ));
        assert!(BackboneParams::random(16, 3, 0).is_err());
    }

    #[test]
    fn mask_repr_differs_from_cls_repr() {
        let p = BackboneParams::random(16, 8, 3).unwrap();
        let out = encode(&[vec![2, 6, MASK]], &p).unwrap();
        assert_ne!(out.mask_repr.as_ref().unwrap(), &out.cls_repr);
    }

    #[test]
    fn pad_row_is_zero() {
        let p = BackboneParams::random(16, 8, 3).unwrap();
        assert!(p.embedding.row(0).iter().all(|&v| v == 0.0));
    }
}
