#ifndef GLEE_H
#define GLEE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Corpus split selector.
 */
typedef enum GleeSplit {
  GLEE_SPLIT_TRAIN = 0,
  GLEE_SPLIT_DEV = 1,
  GLEE_SPLIT_TEST = 2,
} GleeSplit;

typedef enum GleeStatus {
  GLEE_STATUS_OK = 0,
  GLEE_STATUS_NULL_POINTER = 1,
  GLEE_STATUS_INVALID_ARGUMENT = 2,
  GLEE_STATUS_CONFIG = 3,
  GLEE_STATUS_DIMENSION = 4,
  GLEE_STATUS_INDEX = 5,
  GLEE_STATUS_FORMAT = 6,
  GLEE_STATUS_SHAPE = 7,
  GLEE_STATUS_IO = 8,
  GLEE_STATUS_INPUT_STRUCTURE = 9,
  GLEE_STATUS_DEGENERATE = 10,
  GLEE_STATUS_NON_FINITE = 11,
  GLEE_STATUS_BUFFER_TOO_SMALL = 12,
  GLEE_STATUS_INTERNAL = 13,
  GLEE_STATUS_PANIC = 14,
} GleeStatus;

/**
 * Synthetic long-tailed corpus with its vocabulary.
 */
typedef struct GleeCorpus GleeCorpus;

/**
 * Precomputed features with labels.
 */
typedef struct GleeFeatureSet GleeFeatureSet;

/**
 * A trained model (backbone and head).
 */
typedef struct GleeModel GleeModel;

typedef struct GleeEvalSummary {
  double accuracy;
  double macro_f1;
  /**
   * NaN when the head group is empty.
   */
  double head_f1;
  /**
   * NaN when the tail group is empty.
   */
  double tail_f1;
} GleeEvalSummary;

typedef struct GleeSlope {
  double pearson_r;
  double spearman_rho;
  /**
   * 1 when the profile is flat (both correlations are then 0).
   */
  uint8_t flat;
} GleeSlope;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread ("" after a success).
 * The pointer stays valid until the next call on the same thread.
 */
const char *glee_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *glee_version(void);

/**
 * Generates a synthetic long-tailed corpus (other generator settings at
 * their defaults) over a synthetic vocabulary of `vocab_size` ids.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum GleeStatus glee_corpus_generate(size_t num_classes,
                                     double exponent,
                                     size_t total,
                                     size_t vocab_size,
                                     uint64_t seed,
                                     struct GleeCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from `glee_corpus_generate` not yet freed.
 */
void glee_corpus_free(struct GleeCorpus *corpus);

/**
 * Number of classes and of examples in `split`.
 *
 * # Safety
 * `corpus` must be a live handle; the out pointers must be writable.
 */
enum GleeStatus glee_corpus_shape(const struct GleeCorpus *corpus,
                                  enum GleeSplit split,
                                  size_t *out_examples,
                                  size_t *out_classes);

/**
 * Per-class example counts of `split` into `out[0..num_classes]`.
 *
 * # Safety
 * `out` must point to `cap` writable `size_t`s.
 */
enum GleeStatus glee_corpus_class_counts(const struct GleeCorpus *corpus,
                                         enum GleeSplit split,
                                         size_t *out,
                                         size_t cap);

/**
 * Labels of `split` into `out[0..n_examples]`.
 *
 * # Safety
 * `out` must point to `cap` writable `uint32_t`s.
 */
enum GleeStatus glee_corpus_labels(const struct GleeCorpus *corpus,
                                   enum GleeSplit split,
                                   uint32_t *out,
                                   size_t cap);

/**
 * Token ids of `split`, row-major (`n_examples × seq_len`), plus the
 * sequence length. Call with `cap = 0` to query the sizes first.
 *
 * # Safety
 * `out` must point to `cap` writable `uint32_t`s; `out_seq_len` must be writable.
 */
enum GleeStatus glee_corpus_tokens(const struct GleeCorpus *corpus,
                                   enum GleeSplit split,
                                   uint32_t *out,
                                   size_t cap,
                                   size_t *out_seq_len);

/**
 * Vocabulary size (specials included).
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum GleeStatus glee_corpus_vocab_size(const struct GleeCorpus *corpus, size_t *out);

/**
 * Head/tail split of `num_classes` class counts: `out_is_head[c]` is 1 for
 * head classes and 0 for tail classes.
 *
 * # Safety
 * `counts` must hold `num_classes` values; `out_is_head` must hold `num_classes` bytes.
 */
enum GleeStatus glee_head_tail_split(const size_t *counts,
                                     size_t num_classes,
                                     double threshold,
                                     uint8_t *out_is_head);

/**
 * Accuracy and macro/head/tail F1 of `pred` against `gold`. `is_head`
 * marks head classes (as produced by `glee_head_tail_split`).
 *
 * # Safety
 * `gold`/`pred` must hold `n` values, `is_head` `num_classes` bytes.
 */
enum GleeStatus glee_evaluate(const uint32_t *gold,
                              const uint32_t *pred,
                              size_t n,
                              size_t num_classes,
                              const uint8_t *is_head,
                              struct GleeEvalSummary *out);

/**
 * Correlation of per-class norms with frequency rank.
 *
 * # Safety
 * `norms` and `counts` must hold `num_classes` values.
 */
enum GleeStatus glee_norm_slope(const double *norms,
                                const size_t *counts,
                                size_t num_classes,
                                struct GleeSlope *out);

/**
 * Reads a GLEE feature file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GleeStatus glee_features_ingest(const char *path, struct GleeFeatureSet **out);

/**
 * # Safety
 * `features` must be NULL or a live handle.
 */
void glee_features_free(struct GleeFeatureSet *features);

/**
 * Examples, feature width and class count of a feature set.
 *
 * # Safety
 * `features` must be a live handle; out pointers must be writable.
 */
enum GleeStatus glee_features_shape(const struct GleeFeatureSet *features,
                                    size_t *out_examples,
                                    size_t *out_dim,
                                    size_t *out_classes);

/**
 * Loads a model file written by `glee train`, insisting on `num_classes`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GleeStatus glee_model_load(const char *path, size_t num_classes, struct GleeModel **out);

/**
 * # Safety
 * `model` must be NULL or a live handle.
 */
void glee_model_free(struct GleeModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum GleeStatus glee_model_num_classes(const struct GleeModel *model, size_t *out);

/**
 * Per-class predictor norms into `out[0..num_classes]`.
 *
 * # Safety
 * `out` must point to `cap` writable doubles.
 */
enum GleeStatus glee_model_class_norms(const struct GleeModel *model, double *out, size_t cap);

/**
 * Argmax predictions for precomputed features.
 *
 * # Safety
 * `out` must point to `cap` writable `uint32_t`s.
 */
enum GleeStatus glee_model_predict_features(const struct GleeModel *model,
                                            const struct GleeFeatureSet *features,
                                            uint32_t *out,
                                            size_t cap);

/**
 * Argmax predictions for `n` token sequences of `seq_len` ids, row-major.
 *
 * # Safety
 * `ids` must hold `n · seq_len` values; `out` must point to `cap` writable `uint32_t`s.
 */
enum GleeStatus glee_model_predict_tokens(const struct GleeModel *model,
                                          const uint32_t *ids,
                                          size_t n,
                                          size_t seq_len,
                                          uint32_t *out,
                                          size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLEE_H */
