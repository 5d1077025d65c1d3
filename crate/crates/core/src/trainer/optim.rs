use std::collections::BTreeMap;

use crate::autodiff::Gradients;
use crate::error::{GleeError, Result};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &BTreeMap<String, Moments> {
        &self.moments
    }

    pub(crate) fn restore(&mut self, step: u64, moments: BTreeMap<String, Moments>) {
        self.step = step;
        self.moments = moments;
    }

    /// Applies one update to every parameter that has a gradient and is
    /// not listed in `frozen`.
    pub fn step(
        &mut self,
        params: Vec<(&'static str, &mut [f64])>,
        grads: &Gradients,
        lr: f64,
        frozen: &dyn Fn(&str) -> bool,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (name, values) in params {
            if frozen(name) {
                continue;
            }
            let Some(g) = grads.get(name) else { continue };
            if g.data().len() != values.len() {
                return Err(GleeError::dim(
                    "AdamW::step",
                    format!("{name}: gradient has {} entries, parameter {}", g.data().len(), values.len()),
                ));
            }
            let m = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                first: vec![0.0; values.len()],
                second: vec![0.0; values.len()],
            });
            for (((p, &g), m1), m2) in values
                .iter_mut()
                .zip(g.data())
                .zip(m.first.iter_mut())
                .zip(m.second.iter_mut())
            {
                *m1 = self.beta1 * *m1 + (1.0 - self.beta1) * g;
                *m2 = self.beta2 * *m2 + (1.0 - self.beta2) * g * g;
                let update = (*m1 / bc1) / ((*m2 / bc2).sqrt() + self.eps);
                *p -= lr * (update + self.weight_decay * *p);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut opt = AdamW::new(0.0);
        let mut p = vec![1.0, -2.0];
        let mut g = Gradients::new();
        g.accumulate("p", &Matrix::row_vector(&[0.3, -5.0])).unwrap();
        opt.step(vec![("p", &mut p[..])], &g, 0.1, &|_| false).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn zero_lr_and_frozen_leave_params() {
        let mut opt = AdamW::new(0.01);
        let mut p = vec![1.0];
        let mut q = vec![1.0];
        let mut g = Gradients::new();
        g.accumulate_vec("p", &[1.0]).unwrap();
        g.accumulate_vec("q", &[1.0]).unwrap();
        opt.step(vec![("p", &mut p[..]), ("q", &mut q[..])], &g, 0.0, &|_| false).unwrap();
        assert_eq!(p, vec![1.0]);
        opt.step(vec![("q", &mut q[..])], &g, 0.5, &|n| n == "q").unwrap();
        assert_eq!(q, vec![1.0]);
    }
}
