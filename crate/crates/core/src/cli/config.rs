//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::variants::Variant;
use crate::data::{LongTailConfig, DEFAULT_SHOTS, FEWSHOT_BATCH_SIZE};
use crate::error::{GleeError, Result};
use crate::objectives::{LossKind, LossSpec, DEFAULT_FOCAL_GAMMA, DEFAULT_TAU};
use crate::trainer::TrainConfig;
use crate::analysis::DEFAULT_FEATURE_COUNT;

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "analysis.k",
    "backbone.dim",
    "backbone.path",
    "backbone.pretrain",
    "backbone.pretrain_batch_size",
    "backbone.pretrain_epochs",
    "backbone.pretrain_lr",
    "backbone.seed",
    "backbone.vocab_size",
    "batch_size",
    "calibrate.tau",
    "calibrate.taus",
    "data.classes",
    "data.dir",
    "data.exponent",
    "data.fewshot_k",
    "data.ingest",
    "data.max_len",
    "data.max_words",
    "data.min_words",
    "data.seed",
    "data.signal_rate",
    "data.threshold",
    "data.topic_size",
    "data.total",
    "fewshot.batch_size",
    "freeze_backbone",
    "grad_clip_norm",
    "learning_rate",
    "loss.gamma",
    "loss.kind",
    "max_epochs",
    "output",
    "patience",
    "seeds",
    "variants",
    "warmup_epochs",
    "weight_decay",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneSection {
    pub dim: usize,
    pub vocab_size: usize,
    /// Load a saved backbone instead of building one.
    pub path: Option<PathBuf>,
    /// Pretrain on the training split when no path is given.
    pub pretrain: bool,
    pub pretrain_epochs: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub generator: LongTailConfig,
    pub seed: u64,
    /// Directory written by `generate`; when unset the corpus is generated in memory.
    pub dir: Option<PathBuf>,
    /// Precomputed feature file; bypasses the backbone.
    pub ingest: Option<PathBuf>,
    pub threshold: f64,
    pub fewshot_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub backbone: BackboneSection,
    pub variants: Vec<Variant>,
    /// Seed fields are filled per cell; `train.seed` is unused.
    pub train: TrainConfig,
    pub tau: f64,
    pub taus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub fewshot_batch_size: usize,
    pub analysis_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSection {
                generator: LongTailConfig::default(),
                seed: 0,
                dir: None,
                ingest: None,
                threshold: 0.8,
                fewshot_k: DEFAULT_SHOTS,
            },
            backbone: BackboneSection {
                dim: crate::backbone::DEFAULT_DIM,
                vocab_size: crate::backbone::DEFAULT_VOCAB,
                path: None,
                pretrain: true,
                pretrain_epochs: 20,
                pretrain_batch_size: 32,
                pretrain_lr: 3e-3,
                seed: 0,
            },
            variants: Variant::benchmark_matrix(),
            train: TrainConfig::default(),
            tau: DEFAULT_TAU,
            taus: vec![0.0, 0.5, 1.0],
            seeds: vec![1, 2, 3, 4, 5],
            output: None,
            fewshot_batch_size: FEWSHOT_BATCH_SIZE,
            analysis_k: DEFAULT_FEATURE_COUNT,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GleeError::config(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(GleeError::config(key, format!("expected true or false, got {value:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = parse_list("seeds", value)?;
    if seeds.is_empty() {
        return Err(GleeError::config("seeds", "no seeds given"));
    }
    Ok(seeds)
}

fn fmt_list<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                GleeError::config(format!("line {}", lineno + 1), format!("expected key = value, got {line:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), ()).is_some() {
                return Err(GleeError::config(key, "given more than once"));
            }
            c.set(key, value, base_dir)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GleeError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let path = || -> Option<PathBuf> { (!v.is_empty()).then(|| base.join(v)) };
        let g = &mut self.data.generator;
        let b = &mut self.backbone;
        let t = &mut self.train;
        match key {
            "analysis.k" => self.analysis_k = parse(key, v)?,
            "backbone.dim" => b.dim = parse(key, v)?,
            "backbone.path" => b.path = path(),
            "backbone.pretrain" => b.pretrain = parse_bool(key, v)?,
            "backbone.pretrain_batch_size" => b.pretrain_batch_size = parse(key, v)?,
            "backbone.pretrain_epochs" => b.pretrain_epochs = parse(key, v)?,
            "backbone.pretrain_lr" => b.pretrain_lr = parse(key, v)?,
            "backbone.seed" => b.seed = parse(key, v)?,
            "backbone.vocab_size" => b.vocab_size = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "calibrate.tau" => self.tau = parse(key, v)?,
            "calibrate.taus" => self.taus = parse_list(key, v)?,
            "data.classes" => g.num_classes = parse(key, v)?,
            "data.dir" => self.data.dir = path(),
            "data.exponent" => g.exponent = parse(key, v)?,
            "data.fewshot_k" => self.data.fewshot_k = parse(key, v)?,
            "data.ingest" => self.data.ingest = path(),
            "data.max_len" => g.max_len = parse(key, v)?,
            "data.max_words" => g.max_words = parse(key, v)?,
            "data.min_words" => g.min_words = parse(key, v)?,
            "data.seed" => self.data.seed = parse(key, v)?,
            "data.signal_rate" => g.signal_rate = parse(key, v)?,
            "data.threshold" => self.data.threshold = parse(key, v)?,
            "data.topic_size" => g.topic_size = parse(key, v)?,
            "data.total" => g.total = parse(key, v)?,
            "fewshot.batch_size" => self.fewshot_batch_size = parse(key, v)?,
            "freeze_backbone" => t.freeze_backbone = parse_bool(key, v)?,
            "grad_clip_norm" => t.grad_clip_norm = parse(key, v)?,
            "learning_rate" => t.learning_rate = parse(key, v)?,
            "loss.gamma" => t.loss.gamma = parse(key, v)?,
            "loss.kind" => {
                t.loss.kind = match v {
                    "ce" | "cross_entropy" => LossKind::CrossEntropy,
                    "focal" => LossKind::Focal,
                    _ => return Err(GleeError::config(key, format!("unknown loss {v:?}"))),
                }
            }
            "max_epochs" => t.max_epochs = parse(key, v)?,
            "output" => self.output = path(),
            "patience" => t.patience = parse(key, v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "variants" => {
                self.variants = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Variant::by_name)
                    .collect::<Result<_>>()?
            }
            "warmup_epochs" => t.warmup_epochs = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            _ => return Err(GleeError::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(GleeError::config("seeds", "no seeds given"));
        }
        if self.variants.is_empty() {
            return Err(GleeError::config("variants", "no variants given"));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].iter().any(|w| w.name == v.name) {
                return Err(GleeError::config("variants", format!("{} listed twice", v.name)));
            }
        }
        self.train.validate()?;
        if self.data.ingest.is_none() {
            self.data.generator.validate()?;
        }
        if !(self.data.threshold > 0.0 && self.data.threshold < 1.0) {
            return Err(GleeError::config("data.threshold", "must lie in (0, 1)"));
        }
        if self.data.fewshot_k == 0 {
            return Err(GleeError::config("data.fewshot_k", "must be positive"));
        }
        if self.fewshot_batch_size == 0 {
            return Err(GleeError::config("fewshot.batch_size", "must be positive"));
        }
        if self.analysis_k == 0 {
            return Err(GleeError::config("analysis.k", "must be positive"));
        }
        if self.analysis_k > self.backbone.dim && self.data.ingest.is_none() {
            return Err(GleeError::config("analysis.k", "exceeds backbone.dim"));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(GleeError::config("calibrate.tau", "must be finite and non-negative"));
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(GleeError::config("calibrate.taus", "need finite non-negative values"));
        }
        if !(self.backbone.pretrain_lr > 0.0) || self.backbone.pretrain_batch_size == 0 {
            return Err(GleeError::config("backbone.pretrain_lr", "pretraining needs lr > 0 and batch size > 0"));
        }
        for (key, p) in [
            ("backbone.path", &self.backbone.path),
            ("data.dir", &self.data.dir),
            ("data.ingest", &self.data.ingest),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(GleeError::config(key, format!("{} does not exist", p.display())));
                }
            }
        }
        if self.data.ingest.is_some() {
            if let Some(v) = self.variants.iter().find(|v| v.spec.scheme == crate::heads::Scheme::Mlm) {
                return Err(GleeError::config(
                    "variants",
                    format!("{} needs token inputs, but data.ingest supplies features", v.name),
                ));
            }
        }
        Ok(())
    }

    /// Canonical `key=value` lines for every key except `output`.
    pub fn canonical(&self) -> String {
        let g = &self.data.generator;
        let b = &self.backbone;
        let t = &self.train;
        let names: Vec<&str> = self.variants.iter().map(|v| v.name).collect();
        let value = |key: &str| -> String {
            match key {
                "analysis.k" => self.analysis_k.to_string(),
                "backbone.dim" => b.dim.to_string(),
                "backbone.path" => fmt_path(&b.path),
                "backbone.pretrain" => b.pretrain.to_string(),
                "backbone.pretrain_batch_size" => b.pretrain_batch_size.to_string(),
                "backbone.pretrain_epochs" => b.pretrain_epochs.to_string(),
                "backbone.pretrain_lr" => b.pretrain_lr.to_string(),
                "backbone.seed" => b.seed.to_string(),
                "backbone.vocab_size" => b.vocab_size.to_string(),
                "batch_size" => t.batch_size.to_string(),
                "calibrate.tau" => self.tau.to_string(),
                "calibrate.taus" => fmt_list(&self.taus),
                "data.classes" => g.num_classes.to_string(),
                "data.dir" => fmt_path(&self.data.dir),
                "data.exponent" => g.exponent.to_string(),
                "data.fewshot_k" => self.data.fewshot_k.to_string(),
                "data.ingest" => fmt_path(&self.data.ingest),
                "data.max_len" => g.max_len.to_string(),
                "data.max_words" => g.max_words.to_string(),
                "data.min_words" => g.min_words.to_string(),
                "data.seed" => self.data.seed.to_string(),
                "data.signal_rate" => g.signal_rate.to_string(),
                "data.threshold" => self.data.threshold.to_string(),
                "data.topic_size" => g.topic_size.to_string(),
                "data.total" => g.total.to_string(),
                "fewshot.batch_size" => self.fewshot_batch_size.to_string(),
                "freeze_backbone" => t.freeze_backbone.to_string(),
                "grad_clip_norm" => t.grad_clip_norm.to_string(),
                "learning_rate" => t.learning_rate.to_string(),
                "loss.gamma" => t.loss.gamma.to_string(),
                "loss.kind" => match t.loss.kind {
                    LossKind::CrossEntropy => "ce".into(),
                    LossKind::Focal => "focal".into(),
                },
                "max_epochs" => t.max_epochs.to_string(),
                "patience" => t.patience.to_string(),
                "seeds" => fmt_list(&self.seeds),
                "variants" => names.join(","),
                "warmup_epochs" => t.warmup_epochs.to_string(),
                "weight_decay" => t.weight_decay.to_string(),
                _ => unreachable!("{key} missing from canonical form"),
            }
        };
        KEYS.iter()
            .filter(|k| **k != "output")
            .map(|k| format!("{k}={}\n", value(k)))
            .collect()
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    /// The loss a variant trains with: its own override, else the configured one.
    pub fn loss_for(&self, variant: &Variant) -> LossSpec {
        match variant.focal {
            true => LossSpec::focal(if self.train.loss.kind == LossKind::Focal {
                self.train.loss.gamma
            } else {
                DEFAULT_FOCAL_GAMMA
            }),
            false => self.train.loss,
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
