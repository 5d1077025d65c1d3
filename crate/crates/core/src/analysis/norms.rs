use crate::data::frequency_order;
use crate::error::{GleeError, Result};
use crate::model::Model;

/// Relative spread below which a norm profile counts as flat.
pub const FLAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEntry {
    pub class: usize,
    pub count: usize,
    pub norm: f64,
}

/// Per-class predictor norms ordered from the most to the least frequent class.
#[derive(Debug, Clone, PartialEq)]
pub struct NormProfile {
    pub entries: Vec<NormEntry>,
}

impl NormProfile {
    pub fn from_norms(norms: &[f64], class_counts: &[usize]) -> Result<Self> {
        if norms.len() != class_counts.len() {
            return Err(GleeError::dim(
                "norm_profile",
                format!("{} norms, {} class counts", norms.len(), class_counts.len()),
            ));
        }
        let entries = frequency_order(class_counts)
            .into_iter()
            .map(|c| NormEntry {
                class: c,
                count: class_counts[c],
                norm: norms[c],
            })
            .collect();
        Ok(NormProfile { entries })
    }

    pub fn norms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.norm).collect()
    }

    pub fn is_flat(&self) -> bool {
        let norms = self.norms();
        let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        max - min <= FLAT_TOLERANCE * max.abs().max(1e-300)
    }
}

/// Norm profile of a trained model; MLM heads use their effective class rows.
pub fn norm_profile(model: &Model, class_counts: &[usize]) -> Result<NormProfile> {
    NormProfile::from_norms(&model.class_norms()?, class_counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSlope {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub flat: bool,
}

/// Average ranks (0-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Correlation of norm with frequency rank (0 = most frequent). Negative
/// values mean norms shrink toward the tail.
pub fn norm_slope(profile: &NormProfile) -> Result<NormSlope> {
    let n = profile.entries.len();
    if n < 3 {
        return Err(GleeError::Degenerate(format!("{n} classes; need at least 3 for a slope")));
    }
    if profile.is_flat() {
        return Ok(NormSlope {
            pearson_r: 0.0,
            spearman_rho: 0.0,
            flat: true,
        });
    }
    let ranks: Vec<f64> = (0..n).map(|r| r as f64).collect();
    let norms = profile.norms();
    Ok(NormSlope {
        pearson_r: pearson(&ranks, &norms),
        spearman_rho: pearson(&ranks, &average_ranks(&norms)),
        flat: false,
    })
}
