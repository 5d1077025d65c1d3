//! Forward and backward kernels for the few layers the lab needs.
//!
//! Every backward takes the cached forward inputs explicitly; nothing here
//! holds state between calls.

use std::f64::consts::PI;

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{GleeError, Result};

/// LayerNorm epsilon used throughout the lab.
pub const LN_EPS: f64 = 1e-12;

const GELU_CUBIC: f64 = 0.044715;

/// `x·W + b`, with `b` broadcast over rows.
pub fn linear_forward(x: &Matrix, weight: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if weight.cols() != bias.len() {
        return Err(GleeError::dim(
            "linear_forward",
            format!("weight has {} columns, bias has {}", weight.cols(), bias.len()),
        ));
    }
    let mut out = x.matmul(weight)?;
    for i in 0..out.rows() {
        for (o, b) in out.row_mut(i).iter_mut().zip(bias) {
            *o += b;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Matrix,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.cols() != bias.len() {
            return Err(GleeError::dim(
                "Linear::new",
                format!("weight {:?} with bias of length {}", weight.shape(), bias.len()),
            ));
        }
        Ok(Linear { weight, bias })
    }

    /// Normal(0, std) weights, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, std: f64, rng: &mut R) -> Self {
        Linear {
            weight: Matrix::random_normal(input, output, std, rng),
            bias: vec![0.0; output],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Linear {
            weight: Matrix::identity(dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        linear_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&self, x: &Matrix, dout: &Matrix) -> Result<LinearGrads> {
        if dout.cols() != self.output_dim() || dout.rows() != x.rows() {
            return Err(GleeError::dim(
                "Linear::backward",
                format!("dout {:?} for input {:?}", dout.shape(), x.shape()),
            ));
        }
        Ok(LinearGrads {
            input: dout.matmul_t(&self.weight)?,
            weight: x.t_matmul(dout)?,
            bias: dout.column_sums(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let u = (2.0 / PI).sqrt() * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let c = (2.0 / PI).sqrt();
                let t = (c * (x + GELU_CUBIC * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_CUBIC * x * x)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        }
    }
}

pub fn activation_forward(x: &Matrix, kind: Activation) -> Matrix {
    x.map(|v| kind.apply(v))
}

/// Gradient through the activation given its pre-activation input.
pub fn activation_backward(pre: &Matrix, dout: &Matrix, kind: Activation) -> Result<Matrix> {
    if pre.shape() != dout.shape() {
        return Err(GleeError::dim(
            "activation_backward",
            format!("{:?} vs {:?}", pre.shape(), dout.shape()),
        ));
    }
    let data = pre
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&x, &g)| kind.derivative(x) * g)
        .collect();
    Matrix::from_vec(pre.rows(), pre.cols(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormGrads {
    pub input: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    /// gamma = 1, beta = 0.
    pub fn fresh(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LayerNormCache)> {
        layer_norm_forward(x, &self.gamma, &self.beta, LN_EPS)
    }

    pub fn backward(&self, cache: &LayerNormCache, dout: &Matrix) -> Result<LayerNormGrads> {
        layer_norm_backward(cache, &self.gamma, dout)
    }
}

/// Per-row `(x − mean)/√(var + eps) · gamma + beta` with population variance.
///
/// `eps` may be zero, in which case a constant row produces NaN.
pub fn layer_norm_forward(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Matrix, LayerNormCache)> {
    let d = x.cols();
    if d < 2 || gamma.len() != d || beta.len() != d {
        return Err(GleeError::dim(
            "layer_norm_forward",
            format!("row width {d}, gamma {}, beta {}", gamma.len(), beta.len()),
        ));
    }
    if eps < 0.0 {
        return Err(GleeError::config("eps", "must be non-negative"));
    }
    let mut normalized = Matrix::zeros(x.rows(), d);
    let mut out = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        inv_std.push(r);
        let nrow = normalized.row_mut(i);
        for (n, v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * r;
        }
        let orow = out.row_mut(i);
        for j in 0..d {
            orow[j] = normalized[(i, j)] * gamma[j] + beta[j];
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    dout: &Matrix,
) -> Result<LayerNormGrads> {
    let xhat = &cache.normalized;
    if xhat.shape() != dout.shape() || gamma.len() != xhat.cols() {
        return Err(GleeError::dim(
            "layer_norm_backward",
            format!("cache {:?}, dout {:?}", xhat.shape(), dout.shape()),
        ));
    }
    let d = xhat.cols();
    let n = d as f64;
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    let mut dx = Matrix::zeros(xhat.rows(), d);
    let mut dxhat = vec![0.0; d];
    for i in 0..xhat.rows() {
        let xr = xhat.row(i);
        let gr = dout.row(i);
        for j in 0..d {
            dgamma[j] += gr[j] * xr[j];
            dbeta[j] += gr[j];
            dxhat[j] = gr[j] * gamma[j];
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_x: f64 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum();
        let r = cache.inv_std[i];
        let out = dx.row_mut(i);
        for j in 0..d {
            out[j] = r / n * (n * dxhat[j] - sum - xr[j] * sum_x);
        }
    }
    Ok(LayerNormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Row-wise `log softmax`, computed as `z − m − ln(1 + Σ_{j≠argmax} e^{z_j − m})`.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let top = super::matrix::argmax(row);
        let m = row[top];
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != top)
            .map(|(_, &v)| (v - m).exp())
            .sum();
        let lse = rest.ln_1p();
        for v in row.iter_mut() {
            *v = *v - m - lse;
        }
    }
    out
}

pub(crate) fn check_targets(targets: &[usize], rows: usize, classes: usize) -> Result<()> {
    if targets.len() != rows {
        return Err(GleeError::dim(
            "targets",
            format!("{} targets for {rows} rows", targets.len()),
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(GleeError::Index {
            what: "class",
            index: t,
            bound: classes,
        });
    }
    Ok(())
}

/// Mean cross entropy over rows and its gradient `(softmax − onehot)/n`.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    check_targets(targets, logits.rows(), logits.cols())?;
    if logits.rows() == 0 {
        return Err(GleeError::Degenerate("empty batch".into()));
    }
    let n = logits.rows() as f64;
    let logp = log_softmax_rows(logits);
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss -= logp[(i, t)];
        grad[(i, t)] -= 1.0;
    }
    grad.scale(1.0 / n);
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn linear_examples() {
        let out = linear_forward(&m(&[&[1.0, 2.0]]), &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
        let out = linear_forward(&m(&[&[1.0, 0.0]]), &m(&[&[2.0, 3.0], &[5.0, 7.0]]), &[1.0, 1.0])
            .unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
        let out = linear_forward(&Matrix::zeros(3, 2), &m(&[&[2.0, 3.0], &[5.0, 7.0]]), &[4.0, -1.5])
            .unwrap();
        for i in 0..3 {
            assert_eq!(out.row(i), &[4.0, -1.5]);
        }
    }

    #[test]
    fn linear_shape_mismatch() {
        let err = linear_forward(&Matrix::zeros(1, 3), &Matrix::identity(2), &[0.0, 0.0]);
        assert!(matches!(err, Err(GleeError::Dimension { .. })));
        let err = linear_forward(&Matrix::zeros(1, 2), &Matrix::identity(2), &[0.0]);
        assert!(matches!(err, Err(GleeError::Dimension { .. })));
    }

    #[test]
    fn linear_sum_gradient_is_xt_ones() {
        let x = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.0]]);
        let lin = Linear::new(m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]), vec![0.0; 3]).unwrap();
        let dout = Matrix::filled(3, 3, 1.0);
        let g = lin.backward(&x, &dout).unwrap();
        let expected = x.t_matmul(&Matrix::filled(3, 3, 1.0)).unwrap();
        assert_eq!(g.weight, expected);
        assert_eq!(g.bias, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn activation_examples() {
        assert_eq!(Activation::Gelu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-3.5), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        // 0.5·(1 + tanh(√(2/π)·1.044715)), evaluated in extended precision.
        assert!((Activation::Gelu.apply(1.0) - 0.841_191_990_608_276_7).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_examples() {
        let (out, _) = layer_norm_forward(&m(&[&[1.0; 4]]), &[1.0; 4], &[0.0; 4], LN_EPS).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
        let (out, _) = layer_norm_forward(&m(&[&[1.0, 3.0]]), &[1.0; 2], &[0.0; 2], 0.0).unwrap();
        assert_eq!(out.data(), &[-1.0, 1.0]);
        let (out, _) = layer_norm_forward(
            &m(&[&[0.3, -2.0, 9.0], &[1.0, 1.0, 4.0]]),
            &[0.0; 3],
            &[5.0; 3],
            LN_EPS,
        )
        .unwrap();
        assert!(out.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn layer_norm_rejects_narrow_rows() {
        assert!(layer_norm_forward(&m(&[&[1.0]]), &[1.0], &[0.0], LN_EPS).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, grad) = softmax_cross_entropy(&m(&[&[0.0; 4]]), &[0]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(grad.row(0).iter().sum::<f64>().abs() < 1e-15);
        let (loss, _) = softmax_cross_entropy(&m(&[&[10.0, -10.0]]), &[0]).unwrap();
        // ln(1 + e^-20)
        assert!((loss - 2.061_153_620_314_380_7e-9).abs() < 1e-20);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        let err = softmax_cross_entropy(&m(&[&[0.0, 1.0]]), &[2]);
        assert!(matches!(err, Err(GleeError::Index { index: 2, .. })));
    }
}
