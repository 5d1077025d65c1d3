//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use glee::autodiff::Matrix;
use glee::backbone::{BackboneParams, Provenance, CLS, MASK, NUM_SPECIALS, PAD};
use glee::heads::{build_head, HeadContext, HeadSpec, Verbalizer};
use glee::model::{Inputs, Model, Session};
use glee::objectives::{loss_forward_backward, LossSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const D: usize = 8;
pub const C: usize = 3;
pub const V: usize = 16;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random verbalizer over non-special tokens; class `c` gets `c % 3 + 1` tokens.
pub fn random_verbalizer(r: &mut impl Rng, classes: usize, vocab: usize) -> Verbalizer {
    let mut pool: Vec<u32> = (NUM_SPECIALS as u32..vocab as u32).collect();
    pool.shuffle(r);
    let mut it = pool.into_iter();
    let sets = (0..classes)
        .map(|c| (0..c % 3 + 1).map(|_| it.next().expect("vocab too small")).collect())
        .collect();
    Verbalizer::new(sets, vocab).unwrap()
}

/// `[CLS] w… [MASK] [PAD]…` sequences of random words.
pub fn random_prompts(r: &mut impl Rng, n: usize, max_len: usize, vocab: usize) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            let words = r.gen_range(1..=max_len - 2);
            let mut s = vec![CLS];
            s.extend((0..words).map(|_| r.gen_range(NUM_SPECIALS as u32..vocab as u32)));
            s.push(MASK);
            s.resize(max_len, PAD);
            s
        })
        .collect()
}

/// Overwrites every trainable parameter with Normal(0, std) draws so that
/// activations sit well away from their tiny-init regime.
pub fn randomize(model: &mut Model, r: &mut impl Rng, std: f64) {
    let normal = Normal::new(0.0, std).unwrap();
    for (_, values) in model.params_mut() {
        for v in values.iter_mut() {
            *v = normal.sample(r);
        }
    }
}

/// A model with random large-ish weights; the backbone is marked pretrained
/// so that every LN mode is buildable.
pub fn random_model(spec: &HeadSpec, r: &mut impl Rng, verbalizer: &Verbalizer) -> Model {
    let mut backbone = BackboneParams::random(V, D, r.gen()).unwrap();
    backbone.provenance = Provenance::Pretrained;
    let head = build_head(
        spec,
        HeadContext {
            backbone: Some(&backbone),
            dim: D,
            num_classes: verbalizer.num_classes(),
            verbalizer: Some(verbalizer),
        },
        r.gen(),
    )
    .unwrap();
    let mut model = Model::new(Some(backbone), head).unwrap();
    randomize(&mut model, r, 0.3);
    model
}

pub fn loss_of(model: &Model, inputs: Inputs<'_>, targets: &[usize], spec: &LossSpec) -> f64 {
    let logits = model.logits(inputs).unwrap();
    loss_forward_backward(&logits, targets, spec).unwrap().0
}

/// Worst `|analytic − numeric| / max(1, |numeric|)` over up to `per_tensor`
/// random coordinates of every parameter tensor (central differences).
pub fn finite_difference_error(
    model: &Model,
    inputs: Inputs<'_>,
    targets: &[usize],
    spec: &LossSpec,
    h: f64,
    per_tensor: usize,
    r: &mut impl Rng,
) -> f64 {
    let mut session = Session::new(model);
    let logits = session.forward(inputs).unwrap();
    let (_, dlogits) = loss_forward_backward(&logits, targets, spec).unwrap();
    let grads = session.backward(&dlogits).unwrap();

    let mut probe = model.clone();
    let sizes: Vec<(&'static str, usize)> = probe.params_mut().iter().map(|(n, v)| (*n, v.len())).collect();
    let mut worst = 0.0f64;
    for (t, (name, len)) in sizes.into_iter().enumerate() {
        let mut coords: Vec<usize> = (0..len).collect();
        coords.shuffle(r);
        coords.truncate(per_tensor);
        for i in coords {
            let analytic = grads.get(name).map_or(0.0, |g| g.data()[i]);
            let original = probe.params_mut()[t].1[i];
            probe.params_mut()[t].1[i] = original + h;
            let up = loss_of(&probe, inputs, targets, spec);
            probe.params_mut()[t].1[i] = original - h;
            let down = loss_of(&probe, inputs, targets, spec);
            probe.params_mut()[t].1[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
            assert!(err.is_finite(), "{name}[{i}]: analytic {analytic}, numeric {numeric}");
            worst = worst.max(err);
        }
    }
    worst
}

/// Whether central differences at step `h` are trustworthy for this head on
/// `tokens`: no dense pre-activation within a ReLU kink's reach, and no
/// near-constant row entering layer norm (whose curvature grows as 1/σ²).
pub fn well_conditioned(model: &Model, tokens: &[Vec<u32>]) -> bool {
    let enc = glee::backbone::encode(tokens, model.backbone.as_ref().unwrap()).unwrap();
    let repr = model.head.select_repr(&enc).unwrap();
    let pre = model.head.dense.forward(repr).unwrap();
    let min_pre = pre.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let act = glee::autodiff::activation_forward(&pre, model.head.spec.activation);
    let min_std = (0..act.rows())
        .map(|i| {
            let row = act.row(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    let relu = model.head.spec.activation == glee::autodiff::Activation::Relu;
    (!relu || min_pre >= 0.02) && (model.head.ln.is_none() || min_std >= 0.15)
}

pub struct OracleReport {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub macro_f1: f64,
}

/// Per-class TP/FP/FN counting with explicit loops.
pub fn brute_force_metrics(gold: &[usize], pred: &[usize], classes: usize) -> OracleReport {
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&g, &p) in gold.iter().zip(pred) {
            match (g == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        per_class.push(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 });
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    OracleReport {
        accuracy: correct as f64 / gold.len() as f64,
        macro_f1: per_class.iter().sum::<f64>() / classes as f64,
        per_class,
    }
}

/// Head = most frequent classes (ties by id) until their cumulative share
/// reaches the threshold.
pub fn brute_force_head(counts: &[usize], threshold: f64) -> BTreeSet<usize> {
    let total: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut head = BTreeSet::new();
    let mut acc = 0usize;
    for c in order {
        if total > 0 && acc as f64 / total as f64 >= threshold {
            break;
        }
        head.insert(c);
        acc += counts[c];
    }
    head
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::random_normal(rows, cols, std, r)
}

/// A small generated task: plain and prompt-rendered splits over one
/// vocabulary, plus a briefly pretrained backbone.
pub struct SmallTask {
    pub vocab: glee::backbone::Vocabulary,
    pub verbalizer: Verbalizer,
    pub plain: glee::data::SplitCorpus,
    pub prompt: glee::data::SplitCorpus,
    pub backbone: BackboneParams,
}

impl SmallTask {
    pub fn new(classes: usize, total: usize, seed: u64) -> SmallTask {
        use glee::backbone::{mlm_pretrain, PretrainConfig};
        use glee::data::{generate_longtail, synthetic_task, LongTailConfig};
        let (vocab, verbalizer, template) = synthetic_task(classes, 48).unwrap();
        let config = LongTailConfig {
            num_classes: classes,
            exponent: 1.0,
            total,
            max_len: 12,
            min_words: 4,
            max_words: 10,
            ..LongTailConfig::default()
        };
        let plain = generate_longtail(&config, &vocab, &verbalizer, seed).unwrap();
        let prompt = plain
            .rendered(&template, &vocab, config.max_len + template.overhead(&vocab))
            .unwrap();
        let pre = PretrainConfig {
            dim: 16,
            vocab_size: vocab.len(),
            epochs: 3,
            batch_size: 16,
            learning_rate: 3e-3,
        };
        let backbone = mlm_pretrain(&plain.train.sequences, &pre, seed).unwrap().params;
        SmallTask {
            vocab,
            verbalizer,
            plain,
            prompt,
            backbone,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.plain.num_classes()
    }

    pub fn model(&self, spec: &HeadSpec, seed: u64) -> Model {
        let head = build_head(
            spec,
            HeadContext {
                backbone: Some(&self.backbone),
                dim: self.backbone.dim(),
                num_classes: self.num_classes(),
                verbalizer: Some(&self.verbalizer),
            },
            seed,
        )
        .unwrap();
        Model::new(Some(self.backbone.clone()), head).unwrap()
    }

    /// Train/dev/test sets in the input format `spec` expects.
    pub fn sets(&self, spec: &HeadSpec) -> [glee::data::LabeledSet; 3] {
        let c = if spec.needs_prompt() { &self.prompt } else { &self.plain };
        [(&c.train).into(), (&c.dev).into(), (&c.test).into()]
    }
}
