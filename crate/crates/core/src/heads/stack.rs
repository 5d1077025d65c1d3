use crate::autodiff::{
    activation_backward, activation_forward, Activation, Gradients, LayerNorm, LayerNormCache, Linear, Matrix,
};
use crate::error::Result;

/// `dense → activation → optional LN`, the shared body of every head.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stack<'a> {
    pub dense: &'a Linear,
    pub activation: Activation,
    pub ln: Option<&'a LayerNorm>,
}

#[derive(Debug, Clone)]
pub(crate) struct StackCache {
    input: Matrix,
    pre: Matrix,
    ln: Option<LayerNormCache>,
}

/// Parameter names for one stack instance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StackNames {
    pub dense_w: &'static str,
    pub dense_b: &'static str,
    pub ln_gamma: &'static str,
    pub ln_beta: &'static str,
}

impl<'a> Stack<'a> {
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, StackCache)> {
        let pre = self.dense.forward(x)?;
        let act = activation_forward(&pre, self.activation);
        let (out, ln) = match self.ln {
            Some(ln) => {
                let (o, c) = ln.forward(&act)?;
                (o, Some(c))
            }
            None => (act, None),
        };
        Ok((
            out,
            StackCache {
                input: x.clone(),
                pre,
                ln,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &StackCache,
        dout: &Matrix,
        names: StackNames,
        grads: &mut Gradients,
    ) -> Result<Matrix> {
        let dact = match (self.ln, &cache.ln) {
            (Some(ln), Some(c)) => {
                let g = ln.backward(c, dout)?;
                grads.accumulate_vec(names.ln_gamma, &g.gamma)?;
                grads.accumulate_vec(names.ln_beta, &g.beta)?;
                g.input
            }
            _ => dout.clone(),
        };
        let dpre = activation_backward(&cache.pre, &dact, self.activation)?;
        let g = self.dense.backward(&cache.input, &dpre)?;
        grads.accumulate(names.dense_w, &g.weight)?;
        grads.accumulate_vec(names.dense_b, &g.bias)?;
        Ok(g.input)
    }
}
