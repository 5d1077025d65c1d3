use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::experiment::{cell_label, load_tokens, par_map, run_cell, CellOutcome, Task, TokenData};
use super::manifest::{check_output_dir, write_manifest, Status};
use super::variants::Variant;
use crate::analysis::{
    evaluate, feature_distribution, summarize, write_norms_csv, write_norms_svg, write_results_csv, write_slopes_csv,
    write_summary_csv, EvalReport, SlopeRow,
};
use crate::backbone::{mlm_pretrain, PretrainConfig};
use crate::data::{frequency_order, sample_fewshot_indices};
use crate::error::{GleeError, Result};
use crate::model::Model;
use crate::objectives::eta_norm_calibrate;
use crate::trainer::{load_model, save_backbone, save_model};

/// An output directory being filled by one command.
pub struct Run {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl Run {
    /// Registers `rel` as an output and returns its full path.
    pub fn output(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| GleeError::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(path)
    }

    fn csv(&mut self, rel: &str, header: &str, rows: &[String]) -> Result<()> {
        let path = self.output(rel)?;
        let mut text = format!("{header}\n");
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| GleeError::io(&path, e))
    }
}

/// Runs `body` against the output directory, keeping the manifest in step.
pub fn execute(command: &str, config: &ExperimentConfig, body: impl FnOnce(&mut Run) -> Result<()>) -> Result<PathBuf> {
    let dir = config
        .output
        .clone()
        .ok_or_else(|| GleeError::config("output", "no output directory (use --output or `output =`)"))?;
    let hash = config.hash();
    check_output_dir(&dir, &hash)?;
    fs::create_dir_all(&dir).map_err(|e| GleeError::io(&dir, e))?;
    write_manifest(&dir, command, &hash, Status::Incomplete, &[])?;
    let mut run = Run { dir, files: Vec::new() };
    let outcome = body(&mut run);
    let status = if outcome.is_ok() {
        Status::Complete
    } else {
        Status::Incomplete
    };
    write_manifest(&run.dir, command, &hash, status, &run.files)?;
    outcome.map(|_| run.dir)
}

pub fn cmd_generate(config: &ExperimentConfig) -> Result<PathBuf> {
    if config.data.ingest.is_some() || config.data.dir.is_some() {
        return Err(GleeError::config(
            "data.dir",
            "generate builds a fresh synthetic corpus; unset data.dir and data.ingest",
        ));
    }
    execute("generate", config, |run| {
        let tokens = TokenData::synthetic(config)?;
        run.files.extend(tokens.save(&run.dir)?);
        let c = &tokens.corpus;
        let (tr, dv, te) = (c.train.class_counts(), c.dev.class_counts(), c.test.class_counts());
        let rows: Vec<String> = (0..c.num_classes())
            .map(|k| format!("{k},{},{},{}", tr[k], dv[k], te[k]))
            .collect();
        run.csv("counts.csv", "class,train,dev,test", &rows)
    })
}

pub fn cmd_pretrain(config: &ExperimentConfig) -> Result<PathBuf> {
    if config.data.ingest.is_some() {
        return Err(GleeError::config("data.ingest", "pretraining needs a token corpus"));
    }
    if config.backbone.path.is_some() {
        return Err(GleeError::config("backbone.path", "pretrain builds the backbone; unset backbone.path"));
    }
    execute("pretrain", config, |run| {
        let tokens = load_tokens(config)?;
        let b = &config.backbone;
        if b.vocab_size < tokens.vocab.len() {
            return Err(GleeError::config("backbone.vocab_size", "smaller than the corpus vocabulary"));
        }
        let pc = PretrainConfig {
            dim: b.dim,
            vocab_size: b.vocab_size,
            epochs: b.pretrain_epochs,
            batch_size: b.pretrain_batch_size,
            learning_rate: b.pretrain_lr,
        };
        let outcome = mlm_pretrain(&tokens.corpus.train.sequences, &pc, b.seed)?;
        save_backbone(&run.output("backbone.glee")?, &outcome.params)?;
        let mut rows = vec![format!("0,{}", outcome.initial_loss)];
        rows.extend(outcome.epoch_losses.iter().enumerate().map(|(e, l)| format!("{},{l}", e + 1)));
        run.csv("pretrain-log.csv", "epoch,loss", &rows)
    })
}

fn cells(config: &ExperimentConfig) -> Vec<(Variant, u64)> {
    config
        .variants
        .iter()
        .flat_map(|v| config.seeds.iter().map(move |&s| (*v, s)))
        .collect()
}

fn checkpoint_rel(prefix: &str, variant: &str, seed: u64) -> String {
    format!("checkpoints/{prefix}{}.glee", cell_label(variant, seed))
}

/// Writes per-cell artifacts and the merged results; surfaces the first
/// failing cell after preserving every successful one.
fn finish_cells(
    run: &mut Run,
    outcomes: Vec<Result<CellOutcome>>,
    prefix: &str,
    results_name: &str,
    summary_name: &str,
) -> Result<()> {
    let mut reports = Vec::new();
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(cell) => {
                save_model(&run.output(&checkpoint_rel(prefix, cell.variant.name, cell.seed))?, &cell.model)?;
                let rows: Vec<String> = cell
                    .log
                    .epochs
                    .iter()
                    .map(|e| format!("{},{},{},{}", e.epoch, e.mean_loss, e.dev_macro_f1, e.dev_accuracy))
                    .collect();
                run.csv(
                    &format!("logs/{prefix}{}.csv", cell.label()),
                    "epoch,mean_loss,dev_macro_f1,dev_accuracy",
                    &rows,
                )?;
                reports.push(cell.report);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if !reports.is_empty() {
        write_results_csv(&run.output(results_name)?, &reports)?;
        write_summary_csv(&run.output(summary_name)?, &summarize(&reports))?;
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn cmd_train(config: &ExperimentConfig) -> Result<PathBuf> {
    execute("train", config, |run| {
        let task = Task::prepare(config)?;
        let outcomes = par_map(&cells(config), |(v, seed)| {
            run_cell(&task, &task.splits, config, v, *seed, config.train.batch_size)
        })?;
        finish_cells(run, outcomes, "", "results.csv", "summary.csv")
    })
}

pub fn cmd_fewshot(config: &ExperimentConfig) -> Result<PathBuf> {
    execute("fewshot", config, |run| {
        let task = Task::prepare(config)?;
        let n = task.splits.plain[0].len();
        let outcomes = par_map(&cells(config), |(v, seed)| {
            let (train, dev) = sample_fewshot_indices(n, config.data.fewshot_k, *seed)?;
            let splits = task.splits.resampled(&train, &dev);
            run_cell(&task, &splits, config, v, *seed, config.fewshot_batch_size)
        })?;
        finish_cells(run, outcomes, "fewshot-", "fewshot-results.csv", "fewshot-summary.csv")
    })
}

fn load_cell(dir: &Path, task: &Task, variant: &str, seed: u64) -> Result<Model> {
    let path = dir.join(checkpoint_rel("", variant, seed));
    if !path.exists() {
        return Err(GleeError::State(format!(
            "no checkpoint for {} in {}; run `train` first",
            cell_label(variant, seed),
            dir.display()
        )));
    }
    load_model(&path, task.num_classes)
}

pub fn cmd_calibrate(config: &ExperimentConfig) -> Result<PathBuf> {
    execute("calibrate", config, |run| {
        let task = Task::prepare(config)?;
        let dir = run.dir.clone();
        let rows = par_map(&cells(config), |(v, seed)| -> Result<Vec<String>> {
            let model = load_cell(&dir, &task, v.name, *seed)?;
            let test = &task.splits.for_variant(v)[2];
            let mut rows = Vec::new();
            for &tau in &config.taus {
                let calibrated = Model {
                    head: eta_norm_calibrate(&model.head, model.embedding(), tau)?,
                    backbone: model.backbone.clone(),
                };
                let r = evaluate(&calibrated, test, &task.split)?;
                let (_, slope) = task.profile(&calibrated)?;
                let (rho, flat) = slope.map_or((f64::NAN, false), |s| (s.spearman_rho, s.flat));
                rows.push(format!(
                    "{},{seed},{tau},{},{},{},{},{rho},{flat}",
                    v.name, r.accuracy, r.macro_f1, r.head_f1, r.tail_f1
                ));
            }
            Ok(rows)
        })?;
        let rows: Vec<String> = rows.into_iter().collect::<Result<Vec<_>>>()?.concat();
        run.csv(
            "calibrate.csv",
            "variant,seed,tau,accuracy,macro_f1,head_f1,tail_f1,spearman_rho,flat",
            &rows,
        )
    })
}

pub fn cmd_analyze(config: &ExperimentConfig) -> Result<PathBuf> {
    execute("analyze", config, |run| {
        let task = Task::prepare(config)?;
        let dir = run.dir.clone();
        let order = frequency_order(&task.train_counts);
        let head_class = order[0];
        let k = config.analysis_k.min(task.dim);
        let analyzed = par_map(&cells(config), |(v, seed)| -> Result<_> {
            let model = load_cell(&dir, &task, v.name, *seed)?;
            let (profile, slope) = task.profile(&model)?;
            let train_set = &task.splits.for_variant(v)[0];
            let counts = train_set.class_counts();
            let tail_class = order.iter().rev().copied().find(|&c| counts[c] >= 2);
            let mut dists = Vec::new();
            for class in std::iter::once(head_class).chain(tail_class.filter(|&c| c != head_class)) {
                dists.push(feature_distribution(&model, train_set, class, k)?);
            }
            Ok((profile, slope, dists))
        })?;
        let analyzed = analyzed.into_iter().collect::<Result<Vec<_>>>()?;
        let cells = cells(config);

        let mut slopes = Vec::new();
        let mut dead_rows = Vec::new();
        for seed in &config.seeds {
            let mut profiles = Vec::new();
            let mut feature_rows = Vec::new();
            for ((v, s), (profile, slope, dists)) in cells.iter().zip(&analyzed) {
                if s != seed {
                    continue;
                }
                profiles.push((v.name.to_string(), profile.clone()));
                if let Some(slope) = slope {
                    slopes.push(SlopeRow {
                        variant: v.name.to_string(),
                        seed: *s,
                        slope: *slope,
                    });
                }
                for d in dists {
                    dead_rows.push(format!("{},{s},{},{},{},{}", v.name, d.class, d.dead_sampled, d.dead_total, d.dim));
                    for (j, values) in d.samples.iter().enumerate() {
                        for (i, x) in values.iter().enumerate() {
                            feature_rows.push(format!("{},{},{j},{i},{x}", v.name, d.class));
                        }
                    }
                }
            }
            write_norms_csv(&run.output(&format!("norms-seed{seed}.csv"))?, &profiles)?;
            write_norms_svg(&run.output(&format!("norms-seed{seed}.svg"))?, &profiles)?;
            run.csv(
                &format!("features-seed{seed}.csv"),
                "variant,class,feature,example,value",
                &feature_rows,
            )?;
        }
        if !slopes.is_empty() {
            write_slopes_csv(&run.output("slopes.csv")?, &slopes)?;
        }
        run.csv(
            "dead-features.csv",
            "variant,seed,class,dead_sampled,dead_total,dim",
            &dead_rows,
        )
    })
}

/// Reports of a finished `train` run, in file order.
pub fn read_train_results(dir: &Path) -> Result<Vec<EvalReport>> {
    crate::analysis::read_results_csv(&dir.join("results.csv"))
}
