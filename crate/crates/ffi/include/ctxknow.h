#ifndef CTXKNOW_H
#define CTXKNOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CtxknowStatus {
  CTXKNOW_STATUS_OK = 0,
  CTXKNOW_STATUS_NULL_ARGUMENT = 1,
  CTXKNOW_STATUS_INVALID_UTF8 = 2,
  CTXKNOW_STATUS_IO = 3,
  CTXKNOW_STATUS_JSON = 4,
  CTXKNOW_STATUS_INVALID_ARGUMENT = 5,
  CTXKNOW_STATUS_NON_FINITE = 6,
  CTXKNOW_STATUS_BUFFER_TOO_SMALL = 7,
  CTXKNOW_STATUS_PANIC = 8,
  CTXKNOW_STATUS_INTERNAL = 9,
} CtxknowStatus;

/**
 * Trained reader loaded from a checkpoint.
 */
typedef struct CtxknowModel CtxknowModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *ctxknow_last_error(void);

/**
 * Static version string.
 */
const char *ctxknow_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void ctxknow_string_free(char *s);

/**
 * Parses one script with default settings and writes its knowledge triples
 * as a JSON array to `*out_json`.
 *
 * # Safety
 * `script_id` and `text` must be NUL-terminated; `out_json` must be writable.
 */
enum CtxknowStatus ctxknow_extract_json(const char *script_id, const char *text, char **out_json);

/**
 * Loads a checkpoint file into a new handle.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum CtxknowStatus ctxknow_model_load(const char *path, struct CtxknowModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`ctxknow_model_load`] not yet freed.
 */
void ctxknow_model_free(struct CtxknowModel *model);

/**
 * Embedding dimension of the model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ctxknow_model_dim(const struct CtxknowModel *model);

/**
 * Option probabilities for one instance given as JSON. Writes the option
 * count to `*n_out` and, when `capacity` suffices, the probabilities to
 * `probs`. Returns `CTXKNOW_STATUS_BUFFER_TOO_SMALL` otherwise.
 *
 * # Safety
 * `probs` must have room for `capacity` doubles (or be null with capacity 0);
 * `n_out` must be writable.
 */
enum CtxknowStatus ctxknow_model_option_probs(const struct CtxknowModel *model,
                                              const char *instance_json,
                                              double *probs,
                                              size_t capacity,
                                              size_t *n_out);

/**
 * Predicted option index (lowest index on ties).
 *
 * # Safety
 * `instance_json` must be NUL-terminated; `index_out` must be writable.
 */
enum CtxknowStatus ctxknow_model_predict(const struct CtxknowModel *model,
                                         const char *instance_json,
                                         size_t *index_out);

/**
 * Soft label `lambda * onehot(gold) + (1 - lambda) * mean_j teacher_probs[j]`.
 * `teacher_probs` is row-major, `n_teachers` rows of `n_options` values;
 * `out` receives `n_options` values.
 *
 * # Safety
 * `teacher_probs` must hold `n_teachers * n_options` doubles and `out`
 * must have room for `n_options`.
 */
enum CtxknowStatus ctxknow_soft_label(size_t gold,
                                      const double *teacher_probs,
                                      size_t n_teachers,
                                      size_t n_options,
                                      double lambda,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTXKNOW_H */
