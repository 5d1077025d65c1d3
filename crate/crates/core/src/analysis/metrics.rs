use crate::data::{HeadTailSplit, LabeledSet};
use crate::error::{GleeError, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: String,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean F1 over head classes; NaN when the group is empty.
    pub head_f1: f64,
    /// Mean F1 over tail classes; NaN when the group is empty.
    pub tail_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub n_test: usize,
}

/// `C×C` confusion counts, rows = gold, columns = predicted.
pub fn confusion_matrix(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if gold.len() != pred.len() {
        return Err(GleeError::dim(
            "confusion_matrix",
            format!("{} gold labels, {} predictions", gold.len(), pred.len()),
        ));
    }
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        for v in [g, p] {
            if v >= num_classes {
                return Err(GleeError::Index {
                    what: "class",
                    index: v,
                    bound: num_classes,
                });
            }
        }
        m[g][p] += 1;
    }
    Ok(m)
}

/// One-vs-rest F1 per class. A class with no gold and no predicted
/// examples scores 0.
pub fn per_class_f1(confusion: &[Vec<usize>]) -> Vec<f64> {
    let c = confusion.len();
    (0..c)
        .map(|k| {
            let tp = confusion[k][k];
            let gold: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            if gold + predicted == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (gold + predicted) as f64
            }
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn evaluate_predictions(
    gold: &[usize],
    pred: &[usize],
    num_classes: usize,
    split: &HeadTailSplit,
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(GleeError::Degenerate("empty test set".into()));
    }
    if split.num_classes() != num_classes {
        return Err(GleeError::dim(
            "evaluate",
            format!("split covers {} classes, model has {num_classes}", split.num_classes()),
        ));
    }
    let confusion = confusion_matrix(gold, pred, num_classes)?;
    let f1 = per_class_f1(&confusion);
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(EvalReport {
        variant: String::new(),
        seed: 0,
        accuracy: correct as f64 / gold.len() as f64,
        macro_f1: mean(f1.iter().copied()),
        head_f1: mean(split.head.iter().map(|&c| f1[c])),
        tail_f1: mean(split.tail.iter().map(|&c| f1[c])),
        per_class_f1: f1,
        n_test: gold.len(),
    })
}

/// Argmax predictions of `model` on `test`, scored against its labels.
pub fn evaluate(model: &Model, test: &LabeledSet, split: &HeadTailSplit) -> Result<EvalReport> {
    let pred = model.predict(test.as_inputs())?;
    evaluate_predictions(&test.labels, &pred, model.num_classes(), split)
}

/// Macro-F1 alone, without a head/tail split.
pub fn macro_f1(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<f64> {
    let confusion = confusion_matrix(gold, pred, num_classes)?;
    Ok(mean(per_class_f1(&confusion).into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::compute_head_tail;

    #[test]
    fn worked_example() {
        let split = compute_head_tail(&[2, 1, 1], 0.5).unwrap();
        let r = evaluate_predictions(&[0, 0, 1, 2], &[0, 1, 1, 2], 3, &split).unwrap();
        let expect = [2.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in r.per_class_f1.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r.macro_f1 - 0.7778).abs() < 1e-4);
        assert_eq!(r.accuracy, 0.75);
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let split = compute_head_tail(&[2, 2], 0.5).unwrap();
        let r = evaluate_predictions(&[0, 1, 0, 1], &[0, 0, 0, 0], 2, &split).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let gold = [0, 1, 2, 2, 1, 0, 0];
        let split = compute_head_tail(&[3, 2, 2], 0.4).unwrap();
        let r = evaluate_predictions(&gold, &gold, 3, &split).unwrap();
        assert_eq!((r.accuracy, r.macro_f1, r.head_f1, r.tail_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_scores_zero_and_counts() {
        let split = compute_head_tail(&[2, 0], 0.5).unwrap();
        let r = evaluate_predictions(&[0, 0], &[0, 0], 2, &split).unwrap();
        assert_eq!(r.per_class_f1, vec![1.0, 0.0]);
        assert_eq!(r.macro_f1, 0.5);
    }
}
