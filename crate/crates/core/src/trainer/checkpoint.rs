//! Backbone, head and full training-state files in the GLEE block format.

use std::collections::BTreeMap;
use std::path::Path;

use super::optim::{AdamW, Moments};
use super::train::TrainState;
use crate::autodiff::{Activation, LayerNorm, Linear};
use crate::backbone::{BackboneParams, Provenance};
use crate::error::{GleeError, Result};
use crate::format::{read_blocks, write_blocks, Block, BlockMap, FileKind};
use crate::heads::{HeadParams, HeadSpec, InputRepr, LnMode, Predictor, Scheme, TableBinding, Verbalizer};
use crate::model::Model;

fn linear_blocks(out: &mut Vec<Block>, prefix: &str, l: &Linear) {
    out.push(Block::new(format!("{prefix}.weight"), l.weight.clone()));
    out.push(Block::vector(format!("{prefix}.bias"), &l.bias));
}

fn ln_blocks(out: &mut Vec<Block>, prefix: &str, ln: &LayerNorm) {
    out.push(Block::vector(format!("{prefix}.gamma"), &ln.gamma));
    out.push(Block::vector(format!("{prefix}.beta"), &ln.beta));
}

fn read_linear(map: &BlockMap, prefix: &str, input: usize, output: usize) -> Result<Linear> {
    Linear::new(
        map.matrix(&format!("{prefix}.weight"), input, output)?,
        map.vector(&format!("{prefix}.bias"), output)?,
    )
}

fn read_ln(map: &BlockMap, prefix: &str, dim: usize) -> Result<LayerNorm> {
    Ok(LayerNorm {
        gamma: map.vector(&format!("{prefix}.gamma"), dim)?,
        beta: map.vector(&format!("{prefix}.beta"), dim)?,
    })
}

fn code<T: Copy + PartialEq>(table: &[T], value: T) -> f64 {
    table.iter().position(|&t| t == value).expect("value listed in its code table") as f64
}

fn decode<T: Copy>(table: &[T], raw: f64, what: &str) -> Result<T> {
    if raw.fract() == 0.0 && raw >= 0.0 && (raw as usize) < table.len() {
        Ok(table[raw as usize])
    } else {
        Err(GleeError::format(0, format!("invalid {what} code {raw}")))
    }
}

const SCHEMES: [Scheme; 3] = [Scheme::Cls, Scheme::Mlm, Scheme::Hybrid];
const ACTIVATIONS: [Activation; 3] = [Activation::Tanh, Activation::Relu, Activation::Gelu];
const LN_MODES: [LnMode; 3] = [LnMode::None, LnMode::Fresh, LnMode::Pretrained];
const REPRS: [InputRepr; 2] = [InputRepr::Cls, InputRepr::Mask];

pub(crate) fn backbone_blocks(prefix: &str, b: &BackboneParams) -> Vec<Block> {
    let mut out = vec![
        Block::scalar(
            format!("{prefix}provenance"),
            match b.provenance {
                Provenance::Random => 0.0,
                Provenance::Pretrained => 1.0,
            },
        ),
        Block::new(format!("{prefix}embedding"), b.embedding.clone()),
    ];
    linear_blocks(&mut out, &format!("{prefix}encoder.in"), &b.encoder_in);
    linear_blocks(&mut out, &format!("{prefix}encoder.out"), &b.encoder_out);
    linear_blocks(&mut out, &format!("{prefix}mlm.dense"), &b.mlm_dense);
    ln_blocks(&mut out, &format!("{prefix}mlm.ln"), &b.mlm_ln);
    out
}

pub(crate) fn backbone_from_blocks(map: &BlockMap, prefix: &str) -> Result<BackboneParams> {
    let embedding = map.require(&format!("{prefix}embedding"))?.clone();
    let (v, d) = embedding.shape();
    Ok(BackboneParams {
        encoder_in: read_linear(map, &format!("{prefix}encoder.in"), d, d)?,
        encoder_out: read_linear(map, &format!("{prefix}encoder.out"), d, d)?,
        mlm_dense: read_linear(map, &format!("{prefix}mlm.dense"), d, d)?,
        mlm_ln: read_ln(map, &format!("{prefix}mlm.ln"), d)?,
        provenance: decode(
            &[Provenance::Random, Provenance::Pretrained],
            map.scalar(&format!("{prefix}provenance"))?,
            "provenance",
        )?,
        embedding: {
            if v == 0 || d == 0 {
                return Err(GleeError::Shape("empty embedding table".into()));
            }
            embedding
        },
    })
}

pub(crate) fn head_blocks(prefix: &str, h: &HeadParams) -> Vec<Block> {
    let s = &h.spec;
    let mut out = vec![Block::vector(
        format!("{prefix}spec"),
        &[
            code(&SCHEMES, s.scheme),
            code(&ACTIVATIONS, s.activation),
            code(&LN_MODES, s.ln_mode),
            s.tied as u8 as f64,
            code(&REPRS, s.input_repr),
            s.freeze_ln as u8 as f64,
            h.num_classes() as f64,
        ],
    )];
    linear_blocks(&mut out, &format!("{prefix}dense"), &h.dense);
    if let Some(ln) = &h.ln {
        ln_blocks(&mut out, &format!("{prefix}ln"), ln);
    }
    match &h.predictor {
        Predictor::Classes(l) => linear_blocks(&mut out, &format!("{prefix}predictor"), l),
        Predictor::Vocabulary { table, verbalizer } => {
            for (c, toks) in verbalizer.iter().enumerate() {
                let ids: Vec<f64> = toks.iter().map(|&t| t as f64).collect();
                out.push(Block::vector(format!("{prefix}verbalizer.{c}"), &ids));
            }
            if let TableBinding::Decoupled(m) = table {
                out.push(Block::new(format!("{prefix}predictor.table"), m.clone()));
            }
        }
    }
    if let Some(scale) = &h.class_scale {
        out.push(Block::vector(format!("{prefix}class_scale"), scale));
    }
    out
}

/// Rebuilds a head. `vocab_size` bounds verbalizer ids of tied MLM heads,
/// whose table lives in the backbone.
pub(crate) fn head_from_blocks(map: &BlockMap, prefix: &str, vocab_size: Option<usize>) -> Result<HeadParams> {
    let raw = map.vector(&format!("{prefix}spec"), 7)?;
    let spec = HeadSpec {
        scheme: decode(&SCHEMES, raw[0], "scheme")?,
        activation: decode(&ACTIVATIONS, raw[1], "activation")?,
        ln_mode: decode(&LN_MODES, raw[2], "ln mode")?,
        tied: decode(&[false, true], raw[3], "tied flag")?,
        input_repr: decode(&REPRS, raw[4], "input representation")?,
        freeze_ln: decode(&[false, true], raw[5], "freeze flag")?,
    };
    spec.validate()?;
    let c = raw[6] as usize;
    let dense = map.require(&format!("{prefix}dense.weight"))?;
    let d = dense.rows();
    let dense = read_linear(map, &format!("{prefix}dense"), d, d)?;
    let ln = match map.get(&format!("{prefix}ln.gamma")) {
        Some(_) => Some(read_ln(map, &format!("{prefix}ln"), d)?),
        None => None,
    };
    let predictor = match spec.scheme {
        Scheme::Cls | Scheme::Hybrid => Predictor::Classes(read_linear(map, &format!("{prefix}predictor"), d, c)?),
        Scheme::Mlm => {
            let table = if spec.tied {
                TableBinding::Tied
            } else {
                TableBinding::Decoupled(map.require(&format!("{prefix}predictor.table"))?.clone())
            };
            let bound = match &table {
                TableBinding::Decoupled(m) => m.rows(),
                TableBinding::Tied => vocab_size.unwrap_or(u32::MAX as usize),
            };
            let mut classes = Vec::with_capacity(c);
            for k in 0..c {
                let m = map.require(&format!("{prefix}verbalizer.{k}"))?;
                classes.push(m.data().iter().map(|&t| t as u32).collect());
            }
            Predictor::Vocabulary {
                table,
                verbalizer: Verbalizer::new(classes, bound)?,
            }
        }
    };
    let class_scale = match map.get(&format!("{prefix}class_scale")) {
        Some(_) => Some(map.vector(&format!("{prefix}class_scale"), c)?),
        None => None,
    };
    Ok(HeadParams {
        spec,
        dense,
        ln,
        predictor,
        class_scale,
    })
}

fn expect_kind(path: &Path, got: FileKind, want: FileKind) -> Result<()> {
    if got != want {
        return Err(GleeError::format(
            6,
            format!("{} holds a {got:?} file, expected {want:?}", path.display()),
        ));
    }
    Ok(())
}

pub fn save_backbone(path: &Path, b: &BackboneParams) -> Result<()> {
    write_blocks(path, FileKind::Backbone, &backbone_blocks("", b))
}

pub fn load_backbone(path: &Path) -> Result<BackboneParams> {
    let (kind, blocks) = read_blocks(path)?;
    expect_kind(path, kind, FileKind::Backbone)?;
    backbone_from_blocks(&BlockMap::new(blocks), "")
}

/// Saves a model: its head, plus the backbone when there is one.
pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_blocks(path, FileKind::Head, &model_blocks("", model))
}

/// Loads a model saved by [`save_model`], insisting on `num_classes` classes.
pub fn load_model(path: &Path, num_classes: usize) -> Result<Model> {
    let (kind, blocks) = read_blocks(path)?;
    expect_kind(path, kind, FileKind::Head)?;
    let model = model_from_blocks(&BlockMap::new(blocks), "")?;
    if model.num_classes() != num_classes {
        return Err(GleeError::Shape(format!(
            "checkpoint head predicts {} classes, corpus has {num_classes}",
            model.num_classes()
        )));
    }
    Ok(model)
}

fn model_blocks(prefix: &str, model: &Model) -> Vec<Block> {
    let mut out = Vec::new();
    if let Some(b) = &model.backbone {
        out.extend(backbone_blocks(&format!("{prefix}backbone."), b));
    }
    out.extend(head_blocks(&format!("{prefix}head."), &model.head));
    out
}

fn model_from_blocks(map: &BlockMap, prefix: &str) -> Result<Model> {
    let bprefix = format!("{prefix}backbone.");
    let backbone = match map.get(&format!("{bprefix}embedding")) {
        Some(_) => Some(backbone_from_blocks(map, &bprefix)?),
        None => None,
    };
    let head = head_from_blocks(map, &format!("{prefix}head."), backbone.as_ref().map(|b| b.vocab_size()))?;
    Model::new(backbone, head)
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    /// Parameters of the best dev epoch so far, when it differs from the current ones.
    pub best_model: Option<Model>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let s = &ckpt.state;
    let opt = &s.optimizer;
    let mut blocks = model_blocks("model.", &s.model);
    if let Some(best) = &ckpt.best_model {
        blocks.extend(model_blocks("best.", best));
    }
    blocks.push(Block::vector(
        "state",
        &[
            s.epoch as f64,
            s.global_step as f64,
            s.best_metric,
            s.best_epoch as f64,
        ],
    ));
    blocks.push(Block::vector(
        "optim.hyper",
        &[opt.beta1, opt.beta2, opt.eps, opt.weight_decay, opt.steps_taken() as f64],
    ));
    for (name, m) in opt.moments() {
        blocks.push(Block::vector(format!("optim.m1.{name}"), &m.first));
        blocks.push(Block::vector(format!("optim.m2.{name}"), &m.second));
    }
    write_blocks(path, FileKind::Checkpoint, &blocks)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (kind, blocks) = read_blocks(path)?;
    expect_kind(path, kind, FileKind::Checkpoint)?;
    let map = BlockMap::new(blocks);
    let model = model_from_blocks(&map, "model.")?;
    let best_model = match map.get("best.head.spec") {
        Some(_) => Some(model_from_blocks(&map, "best.")?),
        None => None,
    };
    let st = map.vector("state", 4)?;
    let hyper = map.vector("optim.hyper", 5)?;
    let mut optimizer = AdamW::new(hyper[3]);
    optimizer.beta1 = hyper[0];
    optimizer.beta2 = hyper[1];
    optimizer.eps = hyper[2];
    let mut moments = BTreeMap::new();
    for b in map.with_prefix("optim.m1.") {
        let name = &b.name["optim.m1.".len()..];
        let first = b.value.data().to_vec();
        let second = map.vector(&format!("optim.m2.{name}"), first.len())?;
        moments.insert(name.to_string(), Moments { first, second });
    }
    optimizer.restore(hyper[4] as u64, moments);
    Ok(Checkpoint {
        state: TrainState {
            model,
            optimizer,
            epoch: st[0] as usize,
            global_step: st[1] as u64,
            best_metric: st[2],
            best_epoch: st[3] as usize,
        },
        best_model,
    })
}

