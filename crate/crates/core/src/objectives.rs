//! Training losses and post-hoc classifier calibration.

use crate::autodiff::{check_targets, l2_norm, log_softmax_rows, Matrix};
use crate::error::{GleeError, Result};
use crate::heads::{HeadParams, Predictor};

pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropy,
    Focal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Focusing exponent; ignored for cross entropy.
    pub gamma: f64,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        LossSpec {
            kind: LossKind::CrossEntropy,
            gamma: 0.0,
        }
    }

    pub fn focal(gamma: f64) -> Self {
        LossSpec {
            kind: LossKind::Focal,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(GleeError::config(
                "loss.gamma",
                format!("must be finite and non-negative, got {}", self.gamma),
            ));
        }
        Ok(())
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::cross_entropy()
    }
}

/// Mean loss over rows and its gradient with respect to the logits.
///
/// Focal: `−(1 − p_t)^γ · log p_t` with no class-balancing term.
pub fn loss_forward_backward(logits: &Matrix, targets: &[usize], spec: &LossSpec) -> Result<(f64, Matrix)> {
    spec.validate()?;
    check_targets(targets, logits.rows(), logits.cols())?;
    if logits.rows() == 0 {
        return Err(GleeError::Degenerate("empty batch".into()));
    }
    let gamma = match spec.kind {
        LossKind::CrossEntropy => 0.0,
        LossKind::Focal => spec.gamma,
    };
    let n = logits.rows() as f64;
    let logp = log_softmax_rows(logits);
    let mut grad = logp.map(f64::exp);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let lp = logp[(i, t)];
        let p = lp.exp();
        // 1 − p without cancellation
        let q = -lp.exp_m1();
        let weight = q.powf(gamma);
        loss -= weight * lp;
        // dL/dz_j = (γ q^(γ−1) p log p − q^γ)(δ_tj − s_j)
        let focus = if gamma == 0.0 || q == 0.0 {
            0.0
        } else {
            gamma * q.powf(gamma - 1.0) * p * lp
        };
        let coef = focus - weight;
        let row = grad.row_mut(i);
        row[t] -= 1.0;
        // row now holds s_j − δ_tj
        for v in row.iter_mut() {
            *v *= -coef / n;
        }
    }
    Ok((loss / n, grad))
}

/// τ-normalized copy of a head: class row `w_c` becomes `w_c / ‖w_c‖^τ`.
///
/// CLS-style heads rescale predictor weight columns (biases untouched).
/// MLM heads cannot rescale a table shared with the vocabulary, so the
/// calibration is stored as a per-class logit multiplier, which is the same
/// map on the effective class row.
pub fn eta_norm_calibrate(head: &HeadParams, embedding: Option<&Matrix>, tau: f64) -> Result<HeadParams> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(GleeError::config(
            "calibrate.tau",
            format!("must be finite and non-negative, got {tau}"),
        ));
    }
    let mut out = head.clone();
    match &mut out.predictor {
        Predictor::Classes(lin) => {
            let (d, c) = lin.weight.shape();
            for class in 0..c {
                let col = lin.weight.column(class);
                let norm = l2_norm(&col);
                if norm == 0.0 && tau > 0.0 {
                    return Err(GleeError::DegenerateRow { class, tau });
                }
                let divisor = norm.powf(tau);
                for (r, v) in col.iter().enumerate().take(d) {
                    lin.weight[(r, class)] = v / divisor;
                }
            }
        }
        Predictor::Vocabulary { .. } => {
            if tau == 0.0 {
                return Ok(out);
            }
            let norms = head.class_norms(embedding)?;
            let mut scale = head.class_scale.clone().unwrap_or_else(|| vec![1.0; norms.len()]);
            for (class, (s, &norm)) in scale.iter_mut().zip(&norms).enumerate() {
                if norm == 0.0 {
                    return Err(GleeError::DegenerateRow { class, tau });
                }
                *s /= norm.powf(tau);
            }
            out.class_scale = Some(scale);
        }
    }
    Ok(out)
}
