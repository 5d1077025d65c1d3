use std::collections::BTreeMap;

use super::matrix::Matrix;
use crate::error::{GleeError, Result};

/// Named gradient accumulators, iterated in name order.
///
/// Biases are stored as 1×k matrices. Tied parameters appear once under a
/// single name and receive the sum of every usage site's contribution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `grad` into the accumulator for `name`, creating a zeroed one first.
    pub fn accumulate(&mut self, name: &str, grad: &Matrix) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(acc) => acc.add_assign(grad).map_err(|_| {
                GleeError::dim(
                    "Gradients::accumulate",
                    format!("{name}: {:?} into {:?}", grad.shape(), acc.shape()),
                )
            }),
            None => {
                self.entries.insert(name.to_string(), grad.clone());
                Ok(())
            }
        }
    }

    pub fn accumulate_vec(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        self.accumulate(name, &Matrix::row_vector(grad))
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Matrix> {
        self.entries.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// L2 norm over every entry of every gradient.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .map(Matrix::sum_squares)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.entries.values_mut() {
            m.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Matrix::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_sums_same_name() {
        let mut g = Gradients::new();
        g.accumulate("w", &Matrix::filled(2, 2, 1.0)).unwrap();
        g.accumulate("w", &Matrix::filled(2, 2, 0.5)).unwrap();
        assert_eq!(g.get("w").unwrap(), &Matrix::filled(2, 2, 1.5));
        assert!(g.accumulate("w", &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn global_norm_covers_all_entries() {
        let mut g = Gradients::new();
        g.accumulate_vec("a", &[3.0]).unwrap();
        g.accumulate_vec("b", &[4.0]).unwrap();
        assert_eq!(g.global_norm(), 5.0);
    }
}
