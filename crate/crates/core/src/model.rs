//! Backbone + head composition with a one-shot recorded forward pass.

use crate::autodiff::{Gradients, Matrix};
use crate::backbone::{encode, encode_backward, BackboneParams, EncodedBatch};
use crate::heads::{HeadCache, HeadParams, InputRepr};
use crate::error::{GleeError, Result};

/// What a model consumes: token sequences through the backbone, or
/// precomputed representations that bypass it.
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    Tokens(&'a [Vec<u32>]),
    Features(&'a Matrix),
}

impl Inputs<'_> {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Tokens(t) => t.len(),
            Inputs::Features(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub backbone: Option<BackboneParams>,
    pub head: HeadParams,
}

impl Model {
    pub fn new(backbone: Option<BackboneParams>, head: HeadParams) -> Result<Self> {
        if let Some(b) = &backbone {
            if b.dim() != head.dim() {
                return Err(GleeError::Shape(format!(
                    "backbone dim {} vs head dim {}",
                    b.dim(),
                    head.dim()
                )));
            }
        }
        if head.is_tied() && backbone.is_none() {
            return Err(GleeError::config("head", "tied MLM head without a backbone"));
        }
        Ok(Model { backbone, head })
    }

    pub fn embedding(&self) -> Option<&Matrix> {
        self.backbone.as_ref().map(|b| &b.embedding)
    }

    /// The MLM predictor table; for a tied head this is the embedding table.
    pub fn predictor_table(&self) -> Result<Option<&Matrix>> {
        self.head.table(self.embedding())
    }

    /// Mutable access to the MLM predictor table. For a tied head this
    /// writes the backbone embedding.
    pub fn predictor_table_mut(&mut self) -> Option<&mut Matrix> {
        use crate::heads::{Predictor, TableBinding};
        match &mut self.head.predictor {
            Predictor::Classes(_) => None,
            Predictor::Vocabulary {
                table: TableBinding::Decoupled(m),
                ..
            } => Some(m),
            Predictor::Vocabulary {
                table: TableBinding::Tied,
                ..
            } => self.backbone.as_mut().map(|b| &mut b.embedding),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    fn encode_inputs(&self, inputs: Inputs<'_>) -> Result<Option<EncodedBatch>> {
        match inputs {
            Inputs::Features(_) => Ok(None),
            Inputs::Tokens(t) => {
                let b = self.backbone.as_ref().ok_or_else(|| {
                    GleeError::config("backbone", "token inputs need a backbone")
                })?;
                Ok(Some(encode(t, b)?))
            }
        }
    }

    fn repr<'a>(&self, inputs: Inputs<'a>, enc: &'a Option<EncodedBatch>) -> Result<&'a Matrix> {
        match (inputs, enc) {
            (Inputs::Features(m), _) => Ok(m),
            (Inputs::Tokens(_), Some(e)) => self.head.select_repr(e),
            (Inputs::Tokens(_), None) => Err(GleeError::State("inputs were not encoded".into())),
        }
    }

    pub fn logits(&self, inputs: Inputs<'_>) -> Result<Matrix> {
        let enc = self.encode_inputs(inputs)?;
        let repr = self.repr(inputs, &enc)?;
        self.head
            .forward_cached(repr, self.embedding())
            .map(|(l, _)| l)
    }

    /// Pre-predictor features: after activation, and after LN when present.
    pub fn features(&self, inputs: Inputs<'_>) -> Result<Matrix> {
        let enc = self.encode_inputs(inputs)?;
        let repr = self.repr(inputs, &enc)?;
        self.head.features(repr)
    }

    pub fn predict(&self, inputs: Inputs<'_>) -> Result<Vec<usize>> {
        Ok(self.logits(inputs)?.argmax_rows())
    }

    pub fn class_norms(&self) -> Result<Vec<f64>> {
        self.head.class_norms(self.embedding())
    }

    /// All trainable parameters, backbone first. The tied table appears once,
    /// as `embedding`. Names match the keys of [`Gradients`].
    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = Vec::new();
        if let Some(b) = &mut self.backbone {
            out.extend(b.encoder_params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}

struct Tape {
    encoded: Option<EncodedBatch>,
    head: HeadCache,
    rows: usize,
}

/// Records one forward pass so that `backward` can replay it.
pub struct Session<'m> {
    model: &'m Model,
    tape: Option<Tape>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m Model) -> Self {
        Session { model, tape: None }
    }

    pub fn forward(&mut self, inputs: Inputs<'_>) -> Result<Matrix> {
        let model = self.model;
        let encoded = model.encode_inputs(inputs)?;
        let (logits, head) = {
            let repr = model.repr(inputs, &encoded)?;
            model.head.forward_cached(repr, model.embedding())?
        };
        self.tape = Some(Tape {
            encoded,
            head,
            rows: logits.rows(),
        });
        Ok(logits)
    }

    /// Gradients of the loss whose logit-gradient is `dlogits`. Consumes
    /// the recorded pass.
    pub fn backward(&mut self, dlogits: &Matrix) -> Result<Gradients> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| GleeError::State("backward called before forward".into()))?;
        if dlogits.rows() != tape.rows || dlogits.cols() != self.model.num_classes() {
            return Err(GleeError::dim(
                "Session::backward",
                format!("dlogits {:?} for {} rows", dlogits.shape(), tape.rows),
            ));
        }
        let model = self.model;
        let mut grads = Gradients::new();
        let drepr = model
            .head
            .backward(&tape.head, dlogits, model.embedding(), &mut grads)?;
        if let (Some(enc), Some(b)) = (&tape.encoded, &model.backbone) {
            match model.head.spec.input_repr {
                InputRepr::Cls => encode_backward(b, enc, Some(&drepr), None, &mut grads)?,
                InputRepr::Mask => encode_backward(b, enc, None, Some(&drepr), &mut grads)?,
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Matrix};
    use crate::heads::{build_head, HeadContext, HeadSpec, LnMode};

    #[test]
    fn backward_before_forward_is_state_error() {
        let b = BackboneParams::random(16, 8, 0).unwrap();
        let head = build_head(
            &HeadSpec::cls(Activation::Tanh, LnMode::None),
            HeadContext {
                backbone: Some(&b),
                dim: 8,
                num_classes: 3,
                verbalizer: None,
            },
            0,
        )
        .unwrap();
        let model = Model::new(Some(b), head).unwrap();
        let mut s = Session::new(&model);
        assert!(matches!(s.backward(&Matrix::zeros(1, 3)), Err(GleeError::State(_))));
        s.forward(Inputs::Tokens(&[vec![2, 5]])).unwrap();
        assert!(s.backward(&Matrix::zeros(1, 3)).is_ok());
        assert!(matches!(s.backward(&Matrix::zeros(1, 3)), Err(GleeError::State(_))));
    }
}
