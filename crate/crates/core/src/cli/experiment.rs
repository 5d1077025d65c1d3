//! Data preparation and the per-(variant, seed) train/evaluate cell.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::variants::Variant;
use crate::analysis::{evaluate, norm_profile, norm_slope, EvalReport, NormProfile, NormSlope};
use crate::backbone::{mlm_pretrain, BackboneParams, PretrainConfig, PretrainOutcome, Vocabulary};
use crate::data::{
    compute_head_tail, generate_longtail, ingest_features, stratified_indices, synthetic_task, Corpus, HeadTailSplit,
    LabeledSet, Split, SplitCorpus,
};
use crate::error::{GleeError, Result};
use crate::heads::{build_head, HeadContext, PromptConfig, Template, Verbalizer};
use crate::model::Model;
use crate::objectives::eta_norm_calibrate;
use crate::trainer::{load_backbone, train, TrainConfig, TrainLog};

/// Token corpus with everything needed to render prompts.
#[derive(Debug, Clone)]
pub struct TokenData {
    pub vocab: Vocabulary,
    pub prompt: PromptConfig,
    pub corpus: SplitCorpus,
    pub max_len: usize,
}

/// File names inside a directory written by `generate`.
pub const VOCAB_FILE: &str = "vocab.txt";
pub const PROMPT_FILE: &str = "prompt.txt";
pub const META_FILE: &str = "meta.txt";

pub fn split_file(split: Split) -> String {
    format!("{}.tsv", split.name())
}

impl TokenData {
    pub fn synthetic(config: &ExperimentConfig) -> Result<Self> {
        let g = &config.data.generator;
        let (vocab, verbalizer, template) = synthetic_task(g.num_classes, config.backbone.vocab_size)?;
        let corpus = generate_longtail(g, &vocab, &verbalizer, config.data.seed)?;
        Ok(TokenData {
            vocab,
            prompt: PromptConfig { template, verbalizer },
            corpus,
            max_len: g.max_len,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        let io = |p: &Path, e| GleeError::io(p, e);
        let mut written = Vec::new();
        let vocab_path = dir.join(VOCAB_FILE);
        self.vocab.save(&vocab_path)?;
        written.push(VOCAB_FILE.to_string());
        self.prompt.save(&dir.join(PROMPT_FILE), &self.vocab)?;
        written.push(PROMPT_FILE.to_string());
        let meta = format!(
            "classes={}\nmax_len={}\n",
            self.corpus.num_classes(),
            self.max_len
        );
        let meta_path = dir.join(META_FILE);
        fs::write(&meta_path, meta).map_err(|e| io(&meta_path, e))?;
        written.push(META_FILE.to_string());
        for c in [&self.corpus.train, &self.corpus.dev, &self.corpus.test] {
            let name = split_file(c.split);
            c.save(&dir.join(&name), &self.vocab)?;
            written.push(name);
        }
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta = fs::read_to_string(&meta_path).map_err(|e| GleeError::io(&meta_path, e))?;
        let mut classes = None;
        let mut max_len = None;
        for line in meta.lines().filter(|l| !l.trim().is_empty()) {
            let bad = || GleeError::config("data.dir", format!("bad line {line:?} in {META_FILE}"));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let v: usize = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "classes" => classes = Some(v),
                "max_len" => max_len = Some(v),
                _ => return Err(bad()),
            }
        }
        let missing = |k: &str| GleeError::config("data.dir", format!("{META_FILE} lacks {k}"));
        let classes = classes.ok_or_else(|| missing("classes"))?;
        let max_len = max_len.ok_or_else(|| missing("max_len"))?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let prompt = PromptConfig::load(&dir.join(PROMPT_FILE), &vocab)?;
        let load = |split| Corpus::load(&dir.join(split_file(split)), &vocab, max_len, classes, split);
        let corpus = SplitCorpus {
            train: load(Split::Train)?,
            dev: load(Split::Dev)?,
            test: load(Split::Test)?,
        };
        Ok(TokenData {
            vocab,
            prompt,
            corpus,
            max_len,
        })
    }

    pub fn prompt_max_len(&self) -> usize {
        self.max_len + self.prompt.template.overhead(&self.vocab)
    }

    pub fn rendered(&self) -> Result<SplitCorpus> {
        self.corpus
            .rendered(&self.prompt.template, &self.vocab, self.prompt_max_len())
    }

    pub fn template(&self) -> &Template {
        &self.prompt.template
    }
}

/// Train/dev/test sets in both input forms.
#[derive(Debug, Clone)]
pub struct Splits {
    pub plain: [LabeledSet; 3],
    /// Prompt-rendered token sets; `None` for feature inputs, which serve
    /// either representation.
    pub prompt: Option<[LabeledSet; 3]>,
}

impl Splits {
    pub fn for_variant(&self, variant: &Variant) -> &[LabeledSet; 3] {
        match (&self.prompt, variant.spec.needs_prompt()) {
            (Some(p), true) => p,
            _ => &self.plain,
        }
    }

    /// Replaces train/dev by index subsets of the current training set.
    pub fn resampled(&self, train: &[usize], dev: &[usize]) -> Splits {
        let pick = |s: &[LabeledSet; 3]| [s[0].subset(train), s[0].subset(dev), s[2].clone()];
        Splits {
            plain: pick(&self.plain),
            prompt: self.prompt.as_ref().map(pick),
        }
    }
}

fn sets_of(c: &SplitCorpus) -> [LabeledSet; 3] {
    [(&c.train).into(), (&c.dev).into(), (&c.test).into()]
}

/// Everything shared by the cells of one experiment.
#[derive(Debug, Clone)]
pub struct Task {
    pub tokens: Option<TokenData>,
    pub splits: Splits,
    pub backbone: Option<BackboneParams>,
    pub pretrain: Option<PretrainOutcome>,
    pub num_classes: usize,
    pub dim: usize,
    /// Training-split class counts of the full corpus.
    pub train_counts: Vec<usize>,
    pub split: HeadTailSplit,
}

pub fn load_tokens(config: &ExperimentConfig) -> Result<TokenData> {
    match &config.data.dir {
        Some(dir) => TokenData::load(dir),
        None => TokenData::synthetic(config),
    }
}

/// Builds (or loads, or pretrains) the backbone for a token task.
pub fn prepare_backbone(config: &ExperimentConfig, tokens: &TokenData) -> Result<(BackboneParams, Option<PretrainOutcome>)> {
    let b = &config.backbone;
    if b.vocab_size < tokens.vocab.len() {
        return Err(GleeError::config(
            "backbone.vocab_size",
            format!("{} is smaller than the vocabulary ({})", b.vocab_size, tokens.vocab.len()),
        ));
    }
    if let Some(path) = &b.path {
        let params = load_backbone(path)?;
        if params.dim() != b.dim || params.vocab_size() < tokens.vocab.len() {
            return Err(GleeError::config(
                "backbone.path",
                format!(
                    "backbone is {}×{}, config expects dim {} over {} words",
                    params.vocab_size(),
                    params.dim(),
                    b.dim,
                    tokens.vocab.len()
                ),
            ));
        }
        return Ok((params, None));
    }
    if b.pretrain {
        let pc = PretrainConfig {
            dim: b.dim,
            vocab_size: b.vocab_size,
            epochs: b.pretrain_epochs,
            batch_size: b.pretrain_batch_size,
            learning_rate: b.pretrain_lr,
        };
        let outcome = mlm_pretrain(&tokens.corpus.train.sequences, &pc, b.seed)?;
        Ok((outcome.params.clone(), Some(outcome)))
    } else {
        Ok((BackboneParams::random(b.vocab_size, b.dim, b.seed)?, None))
    }
}

impl Task {
    pub fn prepare(config: &ExperimentConfig) -> Result<Task> {
        if let Some(path) = &config.data.ingest {
            let fs = ingest_features(path)?;
            let all = fs.to_labeled();
            let [tr, dv, te] = stratified_indices(&fs.labels, fs.num_classes, config.data.seed);
            let plain = [all.subset(&tr), all.subset(&dv), all.subset(&te)];
            let train_counts = plain[0].class_counts();
            return Ok(Task {
                tokens: None,
                split: compute_head_tail(&train_counts, config.data.threshold)?,
                train_counts,
                splits: Splits { plain, prompt: None },
                backbone: None,
                pretrain: None,
                num_classes: fs.num_classes,
                dim: fs.features.cols(),
            });
        }
        let tokens = load_tokens(config)?;
        let (backbone, pretrain) = prepare_backbone(config, &tokens)?;
        let splits = Splits {
            plain: sets_of(&tokens.corpus),
            prompt: Some(sets_of(&tokens.rendered()?)),
        };
        let train_counts = tokens.corpus.train.class_counts();
        Ok(Task {
            num_classes: tokens.corpus.num_classes(),
            dim: backbone.dim(),
            split: compute_head_tail(&train_counts, config.data.threshold)?,
            train_counts,
            splits,
            backbone: Some(backbone),
            pretrain,
            tokens: Some(tokens),
        })
    }

    pub fn verbalizer(&self) -> Option<&Verbalizer> {
        self.tokens.as_ref().map(|t| &t.prompt.verbalizer)
    }

    pub fn build_model(&self, variant: &Variant, seed: u64) -> Result<Model> {
        let head = build_head(
            &variant.spec,
            HeadContext {
                backbone: self.backbone.as_ref(),
                dim: self.dim,
                num_classes: self.num_classes,
                verbalizer: self.verbalizer(),
            },
            seed,
        )?;
        Model::new(self.backbone.clone(), head)
    }

    pub fn profile(&self, model: &Model) -> Result<(NormProfile, Option<NormSlope>)> {
        let profile = norm_profile(model, &self.train_counts)?;
        let slope = match self.num_classes >= 3 {
            true => Some(norm_slope(&profile)?),
            false => None,
        };
        Ok((profile, slope))
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub variant: Variant,
    pub seed: u64,
    pub report: EvalReport,
    pub model: Model,
    pub log: TrainLog,
    pub profile: NormProfile,
    pub slope: Option<NormSlope>,
}

impl CellOutcome {
    pub fn label(&self) -> String {
        cell_label(self.variant.name, self.seed)
    }
}

pub fn cell_label(variant: &str, seed: u64) -> String {
    format!("{variant}-seed{seed}")
}

/// Builds, trains, optionally calibrates, and evaluates one cell.
pub fn run_cell(
    task: &Task,
    splits: &Splits,
    config: &ExperimentConfig,
    variant: &Variant,
    seed: u64,
    batch_size: usize,
) -> Result<CellOutcome> {
    let [train_set, dev, test] = splits.for_variant(variant);
    let model = task.build_model(variant, seed)?;
    let tc = TrainConfig {
        seed,
        batch_size,
        loss: config.loss_for(variant),
        ..config.train.clone()
    };
    let (mut model, log) = train(model, train_set, dev, &tc)?;
    if variant.eta_norm {
        model.head = eta_norm_calibrate(&model.head, model.embedding(), config.tau)?;
    }
    let mut report = evaluate(&model, test, &task.split)?;
    report.variant = variant.name.to_string();
    report.seed = seed;
    let (profile, slope) = task.profile(&model)?;
    Ok(CellOutcome {
        variant: *variant,
        seed,
        report,
        model,
        log,
        profile,
        slope,
    })
}

/// Worker count from `GLEE_THREADS`, else the machine's parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var("GLEE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(GleeError::config("GLEE_THREADS", format!("expected a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Runs `f` over `items` on at most `GLEE_THREADS` workers; results keep item order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| GleeError::State(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}
