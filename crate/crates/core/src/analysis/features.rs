use crate::data::LabeledSet;
use crate::error::{GleeError, Result};
use crate::model::Model;

/// How many leading feature coordinates are sampled by default.
pub const DEFAULT_FEATURE_COUNT: usize = 10;

/// Values of the first `k` final features over every example of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistribution {
    pub class: usize,
    /// `samples[j]` holds feature `j` of each example, in corpus order.
    pub samples: Vec<Vec<f64>>,
    /// Features among the first `k` that are exactly zero on every example.
    pub dead_sampled: usize,
    /// Dead features over the whole feature vector.
    pub dead_total: usize,
    pub dim: usize,
}

pub fn feature_distribution(model: &Model, set: &LabeledSet, class: usize, k: usize) -> Result<FeatureDistribution> {
    if class >= model.num_classes() {
        return Err(GleeError::Index {
            what: "class",
            index: class,
            bound: model.num_classes(),
        });
    }
    let dim = model.head.dim();
    if k == 0 || k > dim {
        return Err(GleeError::config("analysis.k", format!("{k} is not in 1..={dim}")));
    }
    let members: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == class).collect();
    if members.len() < 2 {
        return Err(GleeError::Degenerate(format!(
            "class {class} has {} examples; need at least 2",
            members.len()
        )));
    }
    let subset = set.subset(&members);
    let feats = model.features(subset.as_inputs())?;
    let dead: Vec<bool> = (0..dim)
        .map(|j| (0..feats.rows()).all(|i| feats[(i, j)] == 0.0))
        .collect();
    Ok(FeatureDistribution {
        class,
        samples: (0..k).map(|j| feats.column(j)).collect(),
        dead_sampled: dead[..k].iter().filter(|&&d| d).count(),
        dead_total: dead.iter().filter(|&&d| d).count(),
        dim,
    })
}
