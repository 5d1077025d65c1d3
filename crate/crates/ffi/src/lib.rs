//! C ABI over `glee`: opaque handles, status codes and a thread-local last
//! error message. Every function returns a [`GleeStatus`]; outputs go
//! through caller-provided pointers. Handles are freed with their
//! `*_free` function; passing NULL to a free is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use glee::analysis::{evaluate_predictions, NormProfile};
use glee::backbone::Vocabulary;
use glee::data::{
    compute_head_tail, generate_longtail, ingest_features, synthetic_task, Corpus, FeatureSet, HeadTailSplit,
    LongTailConfig, SplitCorpus,
};
use glee::model::{Inputs, Model};
use glee::trainer::load_model;
use glee::GleeError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GleeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    Index = 5,
    Format = 6,
    Shape = 7,
    Io = 8,
    InputStructure = 9,
    Degenerate = 10,
    NonFinite = 11,
    BufferTooSmall = 12,
    Internal = 13,
    Panic = 14,
}

impl From<&GleeError> for GleeStatus {
    fn from(e: &GleeError) -> Self {
        match e {
            GleeError::Dimension { .. } => GleeStatus::Dimension,
            GleeError::Index { .. } => GleeStatus::Index,
            GleeError::Config { .. } | GleeError::Template(_) | GleeError::Verbalizer(_) => GleeStatus::Config,
            GleeError::InputStructure(_) => GleeStatus::InputStructure,
            GleeError::DegenerateRow { .. } | GleeError::Degenerate(_) | GleeError::EmptyInput(_) => {
                GleeStatus::Degenerate
            }
            GleeError::Format { .. } => GleeStatus::Format,
            GleeError::Shape(_) => GleeStatus::Shape,
            GleeError::NonFiniteLoss { .. } => GleeStatus::NonFinite,
            GleeError::Io { .. } => GleeStatus::Io,
            _ => GleeStatus::Internal,
        }
    }
}

/// Corpus split selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GleeSplit {
    Train = 0,
    Dev = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GleeEvalSummary {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// NaN when the head group is empty.
    pub head_f1: f64,
    /// NaN when the tail group is empty.
    pub tail_f1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GleeSlope {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    /// 1 when the profile is flat (both correlations are then 0).
    pub flat: u8,
}

/// Synthetic long-tailed corpus with its vocabulary.
pub struct GleeCorpus {
    vocab: Vocabulary,
    corpus: SplitCorpus,
}

/// Precomputed features with labels.
pub struct GleeFeatureSet {
    inner: FeatureSet,
}

/// A trained model (backbone and head).
pub struct GleeModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

/// Runs `f`, recording any error or panic for `glee_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), (GleeStatus, String)>) -> GleeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            GleeStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GleeStatus::Panic
        }
    }
}

fn lib_err(e: GleeError) -> (GleeStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (GleeStatus, String) {
    (GleeStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> (GleeStatus, String) {
    (GleeStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (GleeStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, cap: usize, need: usize, what: &str) -> Result<&'a mut [T], (GleeStatus, String)> {
    if cap < need {
        return Err((
            GleeStatus::BufferTooSmall,
            format!("{what} holds {cap} entries, {need} needed"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), (GleeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (GleeStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn glee_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn glee_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generates a synthetic long-tailed corpus (other generator settings at
/// their defaults) over a synthetic vocabulary of `vocab_size` ids.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_generate(
    num_classes: usize,
    exponent: f64,
    total: usize,
    vocab_size: usize,
    seed: u64,
    out: *mut *mut GleeCorpus,
) -> GleeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = LongTailConfig {
            num_classes,
            exponent,
            total,
            ..LongTailConfig::default()
        };
        let (vocab, verbalizer, _) = synthetic_task(num_classes, vocab_size).map_err(lib_err)?;
        let corpus = generate_longtail(&config, &vocab, &verbalizer, seed).map_err(lib_err)?;
        write(out, Box::into_raw(Box::new(GleeCorpus { vocab, corpus })), "out")
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from `glee_corpus_generate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_free(corpus: *mut GleeCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

fn pick(c: &GleeCorpus, split: GleeSplit) -> &Corpus {
    match split {
        GleeSplit::Train => &c.corpus.train,
        GleeSplit::Dev => &c.corpus.dev,
        GleeSplit::Test => &c.corpus.test,
    }
}

/// Number of classes and of examples in `split`.
///
/// # Safety
/// `corpus` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_shape(
    corpus: *const GleeCorpus,
    split: GleeSplit,
    out_examples: *mut usize,
    out_classes: *mut usize,
) -> GleeStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let part = pick(c, split);
        write(out_examples, part.len(), "out_examples")?;
        write(out_classes, part.num_classes, "out_classes")
    })
}

/// Per-class example counts of `split` into `out[0..num_classes]`.
///
/// # Safety
/// `out` must point to `cap` writable `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_class_counts(
    corpus: *const GleeCorpus,
    split: GleeSplit,
    out: *mut usize,
    cap: usize,
) -> GleeStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let counts = pick(c, split).class_counts();
        out_slice(out, cap, counts.len(), "out")?.copy_from_slice(&counts);
        Ok(())
    })
}

/// Labels of `split` into `out[0..n_examples]`.
///
/// # Safety
/// `out` must point to `cap` writable `uint32_t`s.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_labels(
    corpus: *const GleeCorpus,
    split: GleeSplit,
    out: *mut u32,
    cap: usize,
) -> GleeStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let labels = &pick(c, split).labels;
        for (o, &l) in out_slice(out, cap, labels.len(), "out")?.iter_mut().zip(labels) {
            *o = l as u32;
        }
        Ok(())
    })
}

/// Token ids of `split`, row-major (`n_examples × seq_len`), plus the
/// sequence length. Call with `cap = 0` to query the sizes first.
///
/// # Safety
/// `out` must point to `cap` writable `uint32_t`s; `out_seq_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_tokens(
    corpus: *const GleeCorpus,
    split: GleeSplit,
    out: *mut u32,
    cap: usize,
    out_seq_len: *mut usize,
) -> GleeStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let seqs = &pick(c, split).sequences;
        let len = seqs.first().map_or(0, Vec::len);
        write(out_seq_len, len, "out_seq_len")?;
        let dst = out_slice(out, cap, seqs.len() * len, "out")?;
        for (row, s) in dst.chunks_mut(len.max(1)).zip(seqs) {
            row.copy_from_slice(s);
        }
        Ok(())
    })
}

/// Vocabulary size (specials included).
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_corpus_vocab_size(corpus: *const GleeCorpus, out: *mut usize) -> GleeStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        write(out, c.vocab.len(), "out")
    })
}

fn split_from_mask(is_head: &[u8]) -> HeadTailSplit {
    HeadTailSplit {
        head: (0..is_head.len()).filter(|&c| is_head[c] != 0).collect(),
        tail: (0..is_head.len()).filter(|&c| is_head[c] == 0).collect(),
        threshold: f64::NAN,
    }
}

/// Head/tail split of `num_classes` class counts: `out_is_head[c]` is 1 for
/// head classes and 0 for tail classes.
///
/// # Safety
/// `counts` must hold `num_classes` values; `out_is_head` must hold `num_classes` bytes.
#[no_mangle]
pub unsafe extern "C" fn glee_head_tail_split(
    counts: *const usize,
    num_classes: usize,
    threshold: f64,
    out_is_head: *mut u8,
) -> GleeStatus {
    guard(|| {
        let counts = slice(counts, num_classes, "counts")?;
        let split = compute_head_tail(counts, threshold).map_err(lib_err)?;
        let out = out_slice(out_is_head, num_classes, num_classes, "out_is_head")?;
        for (c, o) in out.iter_mut().enumerate() {
            *o = split.head.contains(&c) as u8;
        }
        Ok(())
    })
}

/// Accuracy and macro/head/tail F1 of `pred` against `gold`. `is_head`
/// marks head classes (as produced by `glee_head_tail_split`).
///
/// # Safety
/// `gold`/`pred` must hold `n` values, `is_head` `num_classes` bytes.
#[no_mangle]
pub unsafe extern "C" fn glee_evaluate(
    gold: *const u32,
    pred: *const u32,
    n: usize,
    num_classes: usize,
    is_head: *const u8,
    out: *mut GleeEvalSummary,
) -> GleeStatus {
    guard(|| {
        let gold: Vec<usize> = slice(gold, n, "gold")?.iter().map(|&g| g as usize).collect();
        let pred: Vec<usize> = slice(pred, n, "pred")?.iter().map(|&p| p as usize).collect();
        let split = split_from_mask(slice(is_head, num_classes, "is_head")?);
        let r = evaluate_predictions(&gold, &pred, num_classes, &split).map_err(lib_err)?;
        write(
            out,
            GleeEvalSummary {
                accuracy: r.accuracy,
                macro_f1: r.macro_f1,
                head_f1: r.head_f1,
                tail_f1: r.tail_f1,
            },
            "out",
        )
    })
}

/// Correlation of per-class norms with frequency rank.
///
/// # Safety
/// `norms` and `counts` must hold `num_classes` values.
#[no_mangle]
pub unsafe extern "C" fn glee_norm_slope(
    norms: *const f64,
    counts: *const usize,
    num_classes: usize,
    out: *mut GleeSlope,
) -> GleeStatus {
    guard(|| {
        let norms = slice(norms, num_classes, "norms")?;
        let counts = slice(counts, num_classes, "counts")?;
        let profile = NormProfile::from_norms(norms, counts).map_err(lib_err)?;
        let s = glee::analysis::norm_slope(&profile).map_err(lib_err)?;
        write(
            out,
            GleeSlope {
                pearson_r: s.pearson_r,
                spearman_rho: s.spearman_rho,
                flat: s.flat as u8,
            },
            "out",
        )
    })
}

/// Reads a GLEE feature file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_features_ingest(path: *const c_char, out: *mut *mut GleeFeatureSet) -> GleeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ingest_features(&path_arg(path)?).map_err(lib_err)?;
        write(out, Box::into_raw(Box::new(GleeFeatureSet { inner })), "out")
    })
}

/// # Safety
/// `features` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn glee_features_free(features: *mut GleeFeatureSet) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Examples, feature width and class count of a feature set.
///
/// # Safety
/// `features` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_features_shape(
    features: *const GleeFeatureSet,
    out_examples: *mut usize,
    out_dim: *mut usize,
    out_classes: *mut usize,
) -> GleeStatus {
    guard(|| {
        let f = &features.as_ref().ok_or_else(|| null("features"))?.inner;
        write(out_examples, f.features.rows(), "out_examples")?;
        write(out_dim, f.features.cols(), "out_dim")?;
        write(out_classes, f.num_classes, "out_classes")
    })
}

/// Loads a model file written by `glee train`, insisting on `num_classes`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_model_load(path: *const c_char, num_classes: usize, out: *mut *mut GleeModel) -> GleeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_model(&path_arg(path)?, num_classes).map_err(lib_err)?;
        write(out, Box::into_raw(Box::new(GleeModel { inner })), "out")
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn glee_model_free(model: *mut GleeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn glee_model_num_classes(model: *const GleeModel, out: *mut usize) -> GleeStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        write(out, m.num_classes(), "out")
    })
}

/// Per-class predictor norms into `out[0..num_classes]`.
///
/// # Safety
/// `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn glee_model_class_norms(model: *const GleeModel, out: *mut f64, cap: usize) -> GleeStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let norms = m.class_norms().map_err(lib_err)?;
        out_slice(out, cap, norms.len(), "out")?.copy_from_slice(&norms);
        Ok(())
    })
}

/// Argmax predictions for precomputed features.
///
/// # Safety
/// `out` must point to `cap` writable `uint32_t`s.
#[no_mangle]
pub unsafe extern "C" fn glee_model_predict_features(
    model: *const GleeModel,
    features: *const GleeFeatureSet,
    out: *mut u32,
    cap: usize,
) -> GleeStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let f = &features.as_ref().ok_or_else(|| null("features"))?.inner;
        let pred = m.predict(Inputs::Features(&f.features)).map_err(lib_err)?;
        for (o, p) in out_slice(out, cap, pred.len(), "out")?.iter_mut().zip(pred) {
            *o = p as u32;
        }
        Ok(())
    })
}

/// Argmax predictions for `n` token sequences of `seq_len` ids, row-major.
///
/// # Safety
/// `ids` must hold `n · seq_len` values; `out` must point to `cap` writable `uint32_t`s.
#[no_mangle]
pub unsafe extern "C" fn glee_model_predict_tokens(
    model: *const GleeModel,
    ids: *const u32,
    n: usize,
    seq_len: usize,
    out: *mut u32,
    cap: usize,
) -> GleeStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        if seq_len == 0 {
            return Err(invalid("seq_len must be positive"));
        }
        let total = n.checked_mul(seq_len).ok_or_else(|| invalid("n · seq_len overflows"))?;
        let ids = slice(ids, total, "ids")?;
        let seqs: Vec<Vec<u32>> = ids.chunks(seq_len).map(<[u32]>::to_vec).collect();
        let pred = m.predict(Inputs::Tokens(&seqs)).map_err(lib_err)?;
        for (o, p) in out_slice(out, cap, pred.len(), "out")?.iter_mut().zip(pred) {
            *o = p as u32;
        }
        Ok(())
    })
}

