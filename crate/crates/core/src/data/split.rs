use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generate::stratum_sizes;
use crate::error::{GleeError, Result};

/// Classes sorted by descending count, ties broken by ascending class id.
pub fn frequency_order(class_counts: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    order.sort_by(|&a, &b| class_counts[b].cmp(&class_counts[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadTailSplit {
    pub head: BTreeSet<usize>,
    pub tail: BTreeSet<usize>,
    pub threshold: f64,
}

impl HeadTailSplit {
    pub fn num_classes(&self) -> usize {
        self.head.len() + self.tail.len()
    }
}

/// Head = the shortest frequency-ordered prefix whose share of all examples
/// reaches `threshold`; tail = the rest.
pub fn compute_head_tail(class_counts: &[usize], threshold: f64) -> Result<HeadTailSplit> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GleeError::config("data.threshold", format!("{threshold} is not in (0, 1)")));
    }
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(GleeError::Degenerate("all class counts are zero".into()));
    }
    let order = frequency_order(class_counts);
    let mut head = BTreeSet::new();
    let mut cumulative = 0usize;
    let mut iter = order.iter();
    for &c in iter.by_ref() {
        head.insert(c);
        cumulative += class_counts[c];
        if cumulative as f64 / total as f64 >= threshold {
            break;
        }
    }
    let tail = iter.copied().collect();
    Ok(HeadTailSplit { head, tail, threshold })
}

/// Stratified ~80/10/10 split of example indices; each part is sorted.
pub fn stratified_indices(labels: &[usize], num_classes: usize, seed: u64) -> [Vec<usize>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let (train, dev, _) = stratum_sizes(members.len());
        parts[0].extend_from_slice(&members[..train]);
        parts[1].extend_from_slice(&members[train..train + dev]);
        parts[2].extend_from_slice(&members[train + dev..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn worked_examples() {
        let counts = [50, 30, 10, 6, 4];
        let s = compute_head_tail(&counts, 0.80).unwrap();
        assert_eq!(s.head, set(&[0, 1]));
        assert_eq!(s.tail, set(&[2, 3, 4]));
        assert_eq!(compute_head_tail(&counts, 0.65).unwrap().head, set(&[0, 1]));
        let single = compute_head_tail(&[7], 0.8).unwrap();
        assert_eq!(single.head, set(&[0]));
        assert!(single.tail.is_empty());
    }

    #[test]
    fn ties_break_by_class_id() {
        assert_eq!(frequency_order(&[3, 5, 5, 1]), vec![1, 2, 0, 3]);
        assert_eq!(compute_head_tail(&[5, 5, 5, 5], 0.5).unwrap().head, set(&[0, 1]));
    }

    #[test]
    fn stratified_parts_cover_everything_once() {
        let labels: Vec<usize> = (0..57).map(|i| (i * 7) % 3).collect();
        let [a, b, c] = stratified_indices(&labels, 3, 9);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
        assert_eq!((a.len(), b.len(), c.len()), (45, 6, 6));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(compute_head_tail(&[0, 0], 0.5), Err(GleeError::Degenerate(_))));
        assert!(compute_head_tail(&[1, 2], 1.0).is_err());
        assert!(compute_head_tail(&[1, 2], 0.0).is_err());
    }
}
