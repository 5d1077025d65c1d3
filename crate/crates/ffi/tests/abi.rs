use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use glee::autodiff::{Activation, Matrix};
use glee::backbone::BackboneParams;
use glee::data::{write_features, FeatureSet};
use glee::heads::{build_head, HeadContext, HeadSpec, LnMode};
use glee::model::Model;
use glee::trainer::save_model;
use glee_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(glee_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn corpus_round_trip_through_handles() {
    let mut corpus = ptr::null_mut();
    unsafe {
        assert_eq!(glee_corpus_generate(5, 1.5, 200, 64, 3, &mut corpus), GleeStatus::Ok);
        let (mut n, mut c) = (0usize, 0usize);
        assert_eq!(glee_corpus_shape(corpus, GleeSplit::Train, &mut n, &mut c), GleeStatus::Ok);
        assert_eq!(c, 5);
        let mut counts = vec![0usize; c];
        assert_eq!(
            glee_corpus_class_counts(corpus, GleeSplit::Train, counts.as_mut_ptr(), counts.len()),
            GleeStatus::Ok
        );
        assert_eq!(counts.iter().sum::<usize>(), n);
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));

        let mut labels = vec![0u32; n];
        assert_eq!(
            glee_corpus_labels(corpus, GleeSplit::Train, labels.as_mut_ptr(), 1),
            GleeStatus::BufferTooSmall
        );
        assert!(last_error().contains("needed"));
        assert_eq!(
            glee_corpus_labels(corpus, GleeSplit::Train, labels.as_mut_ptr(), n),
            GleeStatus::Ok
        );
        let mut seq_len = 0usize;
        assert_eq!(
            glee_corpus_tokens(corpus, GleeSplit::Test, ptr::null_mut(), 0, &mut seq_len),
            GleeStatus::BufferTooSmall
        );
        assert_eq!(seq_len, 20);
        glee_corpus_free(corpus);
        glee_corpus_free(ptr::null_mut());
    }
}

#[test]
fn split_and_evaluate() {
    let counts = [50usize, 30, 10, 6, 4];
    let mut is_head = [0u8; 5];
    unsafe {
        assert_eq!(glee_head_tail_split(counts.as_ptr(), 5, 0.8, is_head.as_mut_ptr()), GleeStatus::Ok);
    }
    assert_eq!(is_head, [1, 1, 0, 0, 0]);

    let gold = [0u32, 0, 1, 2];
    let pred = [0u32, 1, 1, 2];
    let head = [1u8, 0, 0];
    let mut out = GleeEvalSummary::default();
    unsafe {
        assert_eq!(
            glee_evaluate(gold.as_ptr(), pred.as_ptr(), 4, 3, head.as_ptr(), &mut out),
            GleeStatus::Ok
        );
    }
    assert_eq!(out.accuracy, 0.75);
    assert!((out.macro_f1 - 0.7778).abs() < 1e-4);
    assert!((out.head_f1 - 2.0 / 3.0).abs() < 1e-15);
    assert!((out.tail_f1 - 5.0 / 6.0).abs() < 1e-15);

    let bad = [7u32, 0, 0, 0];
    unsafe {
        assert_eq!(
            glee_evaluate(bad.as_ptr(), pred.as_ptr(), 4, 3, head.as_ptr(), &mut out),
            GleeStatus::Index
        );
    }
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(glee_corpus_generate(5, 1.5, 200, 64, 3, ptr::null_mut()), GleeStatus::NullPointer);
        assert_eq!(
            glee_evaluate(ptr::null(), ptr::null(), 3, 2, ptr::null(), ptr::null_mut()),
            GleeStatus::NullPointer
        );
        assert_eq!(glee_features_ingest(ptr::null(), ptr::null_mut()), GleeStatus::NullPointer);
    }
    assert!(last_error().contains("NULL"));
}

#[test]
fn slope_of_decaying_norms() {
    let norms = [4.0, 3.0, 2.0, 1.0];
    let counts = [10usize, 8, 6, 2];
    let mut s = GleeSlope::default();
    unsafe {
        assert_eq!(glee_norm_slope(norms.as_ptr(), counts.as_ptr(), 4, &mut s), GleeStatus::Ok);
    }
    assert_eq!(s.spearman_rho, -1.0);
    assert_eq!(s.flat, 0);
}

#[test]
fn model_and_features_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let feats = FeatureSet {
        features: Matrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.5], vec![0.0, 2.0, -1.0, 0.0], vec![0.2; 4]]).unwrap(),
        labels: vec![0, 1, 2],
        num_classes: 3,
    };
    let fpath = dir.path().join("f.glee");
    write_features(&fpath, &feats).unwrap();
    let b = BackboneParams::random(16, 4, 1).unwrap();
    let head = build_head(
        &HeadSpec::cls(Activation::Tanh, LnMode::None),
        HeadContext {
            backbone: Some(&b),
            dim: 4,
            num_classes: 3,
            verbalizer: None,
        },
        5,
    )
    .unwrap();
    let model = Model::new(Some(b), head).unwrap();
    let mpath = dir.path().join("m.glee");
    save_model(&mpath, &model).unwrap();
    let expected: Vec<u32> = model
        .predict(glee::model::Inputs::Features(&feats.features))
        .unwrap()
        .into_iter()
        .map(|p| p as u32)
        .collect();

    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        let mut fs = ptr::null_mut();
        assert_eq!(glee_features_ingest(c(&fpath).as_ptr(), &mut fs), GleeStatus::Ok);
        let (mut n, mut d, mut k) = (0, 0, 0);
        assert_eq!(glee_features_shape(fs, &mut n, &mut d, &mut k), GleeStatus::Ok);
        assert_eq!((n, d, k), (3, 4, 3));

        let mut m = ptr::null_mut();
        assert_eq!(glee_model_load(c(&mpath).as_ptr(), 4, &mut m), GleeStatus::Shape);
        assert_eq!(glee_model_load(c(&mpath).as_ptr(), 3, &mut m), GleeStatus::Ok);
        let mut pred = [9u32; 3];
        assert_eq!(glee_model_predict_features(m, fs, pred.as_mut_ptr(), 3), GleeStatus::Ok);
        assert_eq!(pred.to_vec(), expected);

        let mut norms = [0.0; 3];
        assert_eq!(glee_model_class_norms(m, norms.as_mut_ptr(), 3), GleeStatus::Ok);
        assert_eq!(norms.to_vec(), model.class_norms().unwrap());

        let ids = [2u32, 5, 6, 0, 2, 7, 0, 0];
        let mut tp = [0u32; 2];
        assert_eq!(glee_model_predict_tokens(m, ids.as_ptr(), 2, 4, tp.as_mut_ptr(), 2), GleeStatus::Ok);

        let missing = c(&dir.path().join("nope.glee"));
        let mut m2 = ptr::null_mut();
        assert_eq!(glee_model_load(missing.as_ptr(), 3, &mut m2), GleeStatus::Io);
        let mut fs2 = ptr::null_mut();
        assert_eq!(glee_features_ingest(c(&mpath).as_ptr(), &mut fs2), GleeStatus::Format);

        glee_model_free(m);
        glee_features_free(fs);
    }
}

/// The generated header compiles as C and links against the static library.
#[test]
fn header_compiles_and_links() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        r#"#include "glee.h"
#include <stdio.h>
int main(void) {
    GleeCorpus *c = NULL;
    GleeStatus s = glee_corpus_generate(4, 1.0, 80, 32, 1, &c);
    if (s != GLEE_STATUS_OK) { printf("%s\n", glee_last_error_message()); return 1; }
    size_t n = 0, k = 0;
    glee_corpus_shape(c, GLEE_SPLIT_TRAIN, &n, &k);
    glee_corpus_free(c);
    printf("%zu %zu %s\n", n, k, glee_version());
    return k == 4 ? 0 : 2;
}
"#,
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "header does not compile");

    // Link against the staticlib when cargo has produced it next to this test binary.
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).map(|p| p.join("libglee_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("static library not found; link step skipped");
        return;
    };
    let bin = dir.path().join("probe");
    let status = Command::new("cc")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
