//! Classifier heads: CLS-style MLPs, the pretrained MLM head with a
//! verbalizer, and the hybrid (CLS head over the `[MASK]` representation).

mod stack;
mod template;
mod verbalizer;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use template::{render_template, PromptConfig, Template};
pub use verbalizer::{verbalizer_reduce, verbalizer_reduce_backward, Verbalizer};

pub(crate) use stack::{Stack, StackCache, StackNames};

use crate::autodiff::{l2_norm, Activation, Gradients, LayerNorm, Linear, Matrix};
use crate::backbone::{BackboneParams, EncodedBatch, Provenance, INIT_STD};
use crate::error::{GleeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Cls,
    Mlm,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LnMode {
    None,
    Fresh,
    Pretrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputRepr {
    Cls,
    Mask,
}

/// One row of the head-variant matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeadSpec {
    pub scheme: Scheme,
    pub activation: Activation,
    pub ln_mode: LnMode,
    pub tied: bool,
    pub input_repr: InputRepr,
    /// Keep LN affinities fixed during training.
    pub freeze_ln: bool,
}

impl HeadSpec {
    pub fn cls(activation: Activation, ln_mode: LnMode) -> Self {
        HeadSpec {
            scheme: Scheme::Cls,
            activation,
            ln_mode,
            tied: false,
            input_repr: InputRepr::Cls,
            freeze_ln: false,
        }
    }

    /// CLS head fed with the `[MASK]` representation of prompt-rendered input.
    pub fn hybrid(activation: Activation, ln_mode: LnMode) -> Self {
        HeadSpec {
            scheme: Scheme::Hybrid,
            input_repr: InputRepr::Mask,
            ..HeadSpec::cls(activation, ln_mode)
        }
    }

    pub fn mlm(tied: bool) -> Self {
        HeadSpec {
            scheme: Scheme::Mlm,
            activation: Activation::Gelu,
            ln_mode: LnMode::Pretrained,
            tied,
            input_repr: InputRepr::Mask,
            freeze_ln: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(GleeError::config("head", format!("{self}: {reason}")));
        match self.scheme {
            Scheme::Mlm => {
                if self.input_repr != InputRepr::Mask {
                    return bad("MLM heads read the [MASK] representation");
                }
                if self.activation != Activation::Gelu || self.ln_mode != LnMode::Pretrained {
                    return bad("MLM heads use GELU and the pretrained LN");
                }
            }
            Scheme::Cls | Scheme::Hybrid => {
                if self.activation == Activation::Gelu {
                    return bad("CLS-style heads use Tanh or ReLU");
                }
                if self.tied {
                    return bad("only MLM heads can tie their predictor");
                }
                let want = if self.scheme == Scheme::Cls {
                    InputRepr::Cls
                } else {
                    InputRepr::Mask
                };
                if self.input_repr != want {
                    return bad("input representation does not match the scheme");
                }
            }
        }
        Ok(())
    }

    pub fn needs_prompt(&self) -> bool {
        self.input_repr == InputRepr::Mask
    }
}

impl fmt::Display for HeadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scheme {
            Scheme::Mlm => write!(f, "mlm{}", if self.tied { "" } else { "+ed" }),
            Scheme::Cls | Scheme::Hybrid => {
                write!(f, "cls-{}", self.activation.name())?;
                match self.ln_mode {
                    LnMode::None => {}
                    LnMode::Fresh => write!(f, "+ln")?,
                    LnMode::Pretrained => write!(f, "+ptln")?,
                }
                if self.scheme == Scheme::Hybrid {
                    write!(f, "+prompt")?;
                }
                Ok(())
            }
        }
    }
}

/// Where an MLM head's vocabulary predictor lives.
#[derive(Debug, Clone, PartialEq)]
pub enum TableBinding {
    /// The backbone's embedding table itself.
    Tied,
    /// A private copy, trained independently of the embedding table.
    Decoupled(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    /// `d×C` linear layer; class `c` owns column `c` of the weight.
    Classes(Linear),
    Vocabulary {
        table: TableBinding,
        verbalizer: Verbalizer,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub spec: HeadSpec,
    pub dense: Linear,
    pub ln: Option<LayerNorm>,
    pub predictor: Predictor,
    /// Per-class logit multipliers; set only by calibration of MLM heads.
    pub class_scale: Option<Vec<f64>>,
}

pub(crate) const P_HEAD_DENSE_W: &str = "head.dense.weight";
pub(crate) const P_HEAD_DENSE_B: &str = "head.dense.bias";
pub(crate) const P_HEAD_LN_G: &str = "head.ln.gamma";
pub(crate) const P_HEAD_LN_B: &str = "head.ln.beta";
pub(crate) const P_HEAD_PRED_W: &str = "head.predictor.weight";
pub(crate) const P_HEAD_PRED_B: &str = "head.predictor.bias";
pub(crate) const P_HEAD_TABLE: &str = "head.predictor.table";

const HEAD_NAMES: StackNames = StackNames {
    dense_w: P_HEAD_DENSE_W,
    dense_b: P_HEAD_DENSE_B,
    ln_gamma: P_HEAD_LN_G,
    ln_beta: P_HEAD_LN_B,
};

/// Everything `build_head` needs besides the spec.
#[derive(Debug, Clone, Copy)]
pub struct HeadContext<'a> {
    pub backbone: Option<&'a BackboneParams>,
    /// Representation width; must match the backbone when one is given.
    pub dim: usize,
    pub num_classes: usize,
    pub verbalizer: Option<&'a Verbalizer>,
}

/// Builds a head. Dense and predictor weights are drawn in a fixed order
/// from `seed`, so heads differing only in activation or LN share their
/// initial weights.
pub fn build_head(spec: &HeadSpec, ctx: HeadContext<'_>, seed: u64) -> Result<HeadParams> {
    spec.validate()?;
    if ctx.num_classes < 2 {
        return Err(GleeError::config("num_classes", "need at least two classes"));
    }
    if let Some(b) = ctx.backbone {
        if b.dim() != ctx.dim {
            return Err(GleeError::Shape(format!(
                "backbone dim {} but head dim {}",
                b.dim(),
                ctx.dim
            )));
        }
    }
    let d = ctx.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.scheme {
        Scheme::Cls | Scheme::Hybrid => {
            let dense = Linear::init(d, d, INIT_STD, &mut rng);
            let predictor = Linear::init(d, ctx.num_classes, INIT_STD, &mut rng);
            let ln = match spec.ln_mode {
                LnMode::None => None,
                LnMode::Fresh => Some(LayerNorm::fresh(d)),
                LnMode::Pretrained => {
                    let b = ctx.backbone.ok_or_else(|| {
                        GleeError::config("head", "pretrained LN requires a backbone")
                    })?;
                    if b.provenance != Provenance::Pretrained {
                        return Err(GleeError::config(
                            "head",
                            "pretrained LN requested but the backbone was never pretrained",
                        ));
                    }
                    Some(b.mlm_ln.clone())
                }
            };
            Ok(HeadParams {
                spec: *spec,
                dense,
                ln,
                predictor: Predictor::Classes(predictor),
                class_scale: None,
            })
        }
        Scheme::Mlm => {
            let b = ctx
                .backbone
                .ok_or_else(|| GleeError::config("head", "MLM heads require a backbone"))?;
            let verbalizer = ctx
                .verbalizer
                .ok_or_else(|| GleeError::config("verbalizer", "MLM heads require a verbalizer"))?;
            if verbalizer.num_classes() != ctx.num_classes {
                return Err(GleeError::Verbalizer(format!(
                    "verbalizer covers {} classes, corpus has {}",
                    verbalizer.num_classes(),
                    ctx.num_classes
                )));
            }
            if verbalizer.max_token() as usize >= b.vocab_size() {
                return Err(GleeError::Verbalizer("token outside backbone vocabulary".into()));
            }
            let table = if spec.tied {
                TableBinding::Tied
            } else {
                TableBinding::Decoupled(b.embedding.clone())
            };
            Ok(HeadParams {
                spec: *spec,
                dense: b.mlm_dense.clone(),
                ln: Some(b.mlm_ln.clone()),
                predictor: Predictor::Vocabulary {
                    table,
                    verbalizer: verbalizer.clone(),
                },
                class_scale: None,
            })
        }
    }
}

/// Cached intermediates of one head forward pass.
#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    stack: StackCache,
    features: Matrix,
}

impl HeadParams {
    pub fn num_classes(&self) -> usize {
        match &self.predictor {
            Predictor::Classes(l) => l.output_dim(),
            Predictor::Vocabulary { verbalizer, .. } => verbalizer.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dense.input_dim()
    }

    pub(crate) fn stack(&self) -> Stack<'_> {
        Stack {
            dense: &self.dense,
            activation: self.spec.activation,
            ln: self.ln.as_ref(),
        }
    }

    pub fn is_tied(&self) -> bool {
        matches!(
            self.predictor,
            Predictor::Vocabulary {
                table: TableBinding::Tied,
                ..
            }
        )
    }

    /// The vocabulary table for MLM heads, resolving a tie to `embedding`.
    pub(crate) fn table<'a>(&'a self, embedding: Option<&'a Matrix>) -> Result<Option<&'a Matrix>> {
        match &self.predictor {
            Predictor::Classes(_) => Ok(None),
            Predictor::Vocabulary { table, .. } => match table {
                TableBinding::Decoupled(m) => Ok(Some(m)),
                TableBinding::Tied => embedding.map(Some).ok_or_else(|| {
                    GleeError::State("tied MLM head used without its embedding table".into())
                }),
            },
        }
    }

    /// Selects the representation this head consumes.
    pub fn select_repr<'b>(&self, batch: &'b EncodedBatch) -> Result<&'b Matrix> {
        match self.spec.input_repr {
            InputRepr::Cls => Ok(&batch.cls_repr),
            InputRepr::Mask => batch.mask_repr.as_ref().ok_or_else(|| {
                GleeError::InputStructure(format!(
                    "{} head needs a [MASK] representation but the input has no [MASK]",
                    self.spec
                ))
            }),
        }
    }

    /// Final pre-predictor features (post activation, post LN when present).
    pub fn features(&self, repr: &Matrix) -> Result<Matrix> {
        self.stack().forward(repr).map(|(f, _)| f)
    }

    pub(crate) fn forward_cached(&self, repr: &Matrix, embedding: Option<&Matrix>) -> Result<(Matrix, HeadCache)> {
        if repr.cols() != self.dim() {
            return Err(GleeError::dim(
                "head_forward",
                format!("representation width {} for head dim {}", repr.cols(), self.dim()),
            ));
        }
        let (features, stack) = self.stack().forward(repr)?;
        let logits = self.logits_from_features(&features, embedding)?;
        Ok((logits, HeadCache { stack, features }))
    }

    pub fn logits_from_features(&self, features: &Matrix, embedding: Option<&Matrix>) -> Result<Matrix> {
        let mut logits = match &self.predictor {
            Predictor::Classes(l) => l.forward(features)?,
            Predictor::Vocabulary { verbalizer, .. } => {
                let table = self.table(embedding)?.expect("vocabulary predictor");
                verbalizer_reduce(&features.matmul_t(table)?, verbalizer)?
            }
        };
        if let Some(scale) = &self.class_scale {
            for i in 0..logits.rows() {
                for (v, s) in logits.row_mut(i).iter_mut().zip(scale) {
                    *v *= s;
                }
            }
        }
        Ok(logits)
    }

    /// Backpropagates class-logit gradients; returns the gradient on the
    /// input representation. A tied table's gradient lands on `embedding`.
    pub(crate) fn backward(
        &self,
        cache: &HeadCache,
        dlogits: &Matrix,
        embedding: Option<&Matrix>,
        grads: &mut Gradients,
    ) -> Result<Matrix> {
        let mut d = dlogits.clone();
        if let Some(scale) = &self.class_scale {
            for i in 0..d.rows() {
                for (v, s) in d.row_mut(i).iter_mut().zip(scale) {
                    *v *= s;
                }
            }
        }
        let dfeatures = match &self.predictor {
            Predictor::Classes(l) => {
                let g = l.backward(&cache.features, &d)?;
                grads.accumulate(P_HEAD_PRED_W, &g.weight)?;
                grads.accumulate_vec(P_HEAD_PRED_B, &g.bias)?;
                g.input
            }
            Predictor::Vocabulary { table, verbalizer } => {
                let t = self.table(embedding)?.expect("vocabulary predictor");
                let dtok = verbalizer_reduce_backward(&d, verbalizer, t.rows());
                let dtable = dtok.t_matmul(&cache.features)?;
                let name = match table {
                    TableBinding::Tied => crate::backbone::P_EMBEDDING,
                    TableBinding::Decoupled(_) => P_HEAD_TABLE,
                };
                grads.accumulate(name, &dtable)?;
                dtok.matmul(t)?
            }
        };
        self.stack().backward(&cache.stack, &dfeatures, HEAD_NAMES, grads)
    }

    /// Per-class effective predictor rows (`C×d`): weight columns for
    /// CLS-style heads, the mean verbalizer-token table row for MLM heads.
    /// Calibration scales are folded in.
    pub fn class_rows(&self, embedding: Option<&Matrix>) -> Result<Matrix> {
        let mut rows = match &self.predictor {
            Predictor::Classes(l) => l.weight.transpose(),
            Predictor::Vocabulary { verbalizer, .. } => {
                let t = self.table(embedding)?.expect("vocabulary predictor");
                let mut m = Matrix::zeros(verbalizer.num_classes(), t.cols());
                for (c, toks) in verbalizer.iter().enumerate() {
                    let inv = 1.0 / toks.len() as f64;
                    for &tok in toks {
                        for (o, v) in m.row_mut(c).iter_mut().zip(t.row(tok as usize)) {
                            *o += v * inv;
                        }
                    }
                }
                m
            }
        };
        if let Some(scale) = &self.class_scale {
            for (c, s) in scale.iter().enumerate() {
                rows.row_mut(c).iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(rows)
    }

    pub fn class_norms(&self, embedding: Option<&Matrix>) -> Result<Vec<f64>> {
        let rows = self.class_rows(embedding)?;
        Ok((0..rows.rows()).map(|c| l2_norm(rows.row(c))).collect())
    }

    /// Trainable head parameters as `(name, values)`. A tied table is owned
    /// by the backbone and not listed here.
    pub(crate) fn params_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            (P_HEAD_DENSE_W, self.dense.weight.data_mut()),
            (P_HEAD_DENSE_B, &mut self.dense.bias[..]),
        ];
        if let Some(ln) = &mut self.ln {
            out.push((P_HEAD_LN_G, &mut ln.gamma[..]));
            out.push((P_HEAD_LN_B, &mut ln.beta[..]));
        }
        match &mut self.predictor {
            Predictor::Classes(l) => {
                out.push((P_HEAD_PRED_W, l.weight.data_mut()));
                out.push((P_HEAD_PRED_B, &mut l.bias[..]));
            }
            Predictor::Vocabulary {
                table: TableBinding::Decoupled(m),
                ..
            } => out.push((P_HEAD_TABLE, m.data_mut())),
            Predictor::Vocabulary { .. } => {}
        }
        out
    }
}

/// Class logits for a batch. `embedding` is required for tied MLM heads.
pub fn head_forward(params: &HeadParams, batch: &EncodedBatch, embedding: Option<&Matrix>) -> Result<Matrix> {
    let repr = params.select_repr(batch)?;
    params.forward_cached(repr, embedding).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::layer_norm_forward;
    use crate::autodiff::{activation_forward, LN_EPS};
    use crate::backbone::encode;

    fn pretrained_backbone() -> BackboneParams {
        let mut b = BackboneParams::random(16, 8, 11).unwrap();
        b.provenance = Provenance::Pretrained;
        b.mlm_ln.gamma = (0..8).map(|i| 1.0 + 0.1 * i as f64).collect();
        b.mlm_ln.beta = (0..8).map(|i| -0.05 * i as f64).collect();
        b
    }

    fn ctx(b: &BackboneParams) -> HeadContext<'_> {
        HeadContext {
            backbone: Some(b),
            dim: b.dim(),
            num_classes: 3,
            verbalizer: None,
        }
    }

    #[test]
    fn cls_tanh_without_ln() {
        let b = pretrained_backbone();
        let h = build_head(&HeadSpec::cls(Activation::Tanh, LnMode::None), ctx(&b), 1).unwrap();
        assert!(h.ln.is_none());
        assert_eq!(h.num_classes(), 3);
    }

    #[test]
    fn pretrained_ln_copies_backbone_affinities() {
        let b = pretrained_backbone();
        let h = build_head(&HeadSpec::cls(Activation::Relu, LnMode::Pretrained), ctx(&b), 1).unwrap();
        assert_eq!(h.ln.as_ref().unwrap(), &b.mlm_ln);
    }

    #[test]
    fn pretrained_ln_needs_pretrained_backbone() {
        let b = BackboneParams::random(16, 8, 11).unwrap();
        let err = build_head(&HeadSpec::cls(Activation::Relu, LnMode::Pretrained), ctx(&b), 1);
        assert!(matches!(err, Err(GleeError::Config { .. })));
    }

    #[test]
    fn activation_is_the_only_difference() {
        let b = pretrained_backbone();
        let t = build_head(&HeadSpec::cls(Activation::Tanh, LnMode::None), ctx(&b), 5).unwrap();
        let r = build_head(&HeadSpec::cls(Activation::Relu, LnMode::Fresh), ctx(&b), 5).unwrap();
        assert_eq!(t.dense, r.dense);
        assert_eq!(t.predictor, r.predictor);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = HeadSpec::cls(Activation::Gelu, LnMode::None);
        assert!(s.validate().is_err());
        s = HeadSpec::mlm(true);
        s.input_repr = InputRepr::Cls;
        assert!(s.validate().is_err());
        s = HeadSpec::cls(Activation::Tanh, LnMode::None);
        s.tied = true;
        assert!(s.validate().is_err());
        assert!(HeadSpec::hybrid(Activation::Relu, LnMode::Fresh).validate().is_ok());
    }

    #[test]
    fn zero_dense_gives_predictor_bias() {
        let b = pretrained_backbone();
        let mut h = build_head(&HeadSpec::cls(Activation::Tanh, LnMode::None), ctx(&b), 1).unwrap();
        h.dense.weight = Matrix::zeros(8, 8);
        if let Predictor::Classes(l) = &mut h.predictor {
            l.bias = vec![0.5, -1.0, 2.0];
        }
        let batch = encode(&[vec![2, 5, 6], vec![2, 9]], &b).unwrap();
        let logits = head_forward(&h, &batch, None).unwrap();
        for i in 0..2 {
            assert_eq!(logits.row(i), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn relu_ln_matches_manual_composition() {
        let b = pretrained_backbone();
        let plain = build_head(&HeadSpec::cls(Activation::Relu, LnMode::None), ctx(&b), 3).unwrap();
        let with_ln = build_head(&HeadSpec::cls(Activation::Relu, LnMode::Fresh), ctx(&b), 3).unwrap();
        let batch = encode(&[vec![2, 5, 6], vec![2, 9, 10, 11]], &b).unwrap();
        let pre = plain.dense.forward(&batch.cls_repr).unwrap();
        let act = activation_forward(&pre, Activation::Relu);
        let (normed, _) = layer_norm_forward(&act, &[1.0; 8], &[0.0; 8], LN_EPS).unwrap();
        let Predictor::Classes(pred) = &plain.predictor else { unreachable!() };
        let manual = pred.forward(&normed).unwrap();
        assert_eq!(head_forward(&with_ln, &batch, None).unwrap(), manual);
    }

    #[test]
    fn mlm_singleton_class_returns_token_logit() {
        let b = pretrained_backbone();
        let v = Verbalizer::new(vec![vec![7], vec![8, 9]], 16).unwrap();
        let h = build_head(
            &HeadSpec::mlm(true),
            HeadContext {
                verbalizer: Some(&v),
                num_classes: 2,
                ..ctx(&b)
            },
            0,
        )
        .unwrap();
        let batch = encode(&[vec![2, 5, crate::backbone::MASK]], &b).unwrap();
        let feats = h.features(batch.mask_repr.as_ref().unwrap()).unwrap();
        let tok = feats.matmul_t(&b.embedding).unwrap();
        let logits = head_forward(&h, &batch, Some(&b.embedding)).unwrap();
        assert_eq!(logits[(0, 0)], tok[(0, 7)]);
    }

    #[test]
    fn mlm_without_mask_is_input_structure_error() {
        let b = pretrained_backbone();
        let v = Verbalizer::new(vec![vec![7], vec![8]], 16).unwrap();
        let h = build_head(
            &HeadSpec::mlm(false),
            HeadContext {
                verbalizer: Some(&v),
                num_classes: 2,
                ..ctx(&b)
            },
            0,
        )
        .unwrap();
        let batch = encode(&[vec![2, 5, 6]], &b).unwrap();
        assert!(matches!(head_forward(&h, &batch, None), Err(GleeError::InputStructure(_))));
    }

    #[test]
    fn display_names() {
        assert_eq!(HeadSpec::cls(Activation::Relu, LnMode::Pretrained).to_string(), "cls-relu+ptln");
        assert_eq!(HeadSpec::hybrid(Activation::Relu, LnMode::None).to_string(), "cls-relu+prompt");
        assert_eq!(HeadSpec::mlm(false).to_string(), "mlm+ed");
    }
}
