#ifndef C2V2L_H
#define C2V2L_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum C2v2lStatus {
  C2V2L_STATUS_OK = 0,
  C2V2L_STATUS_NULL_POINTER = 1,
  C2V2L_STATUS_INVALID_UTF8 = 2,
  C2V2L_STATUS_IO = 3,
  C2V2L_STATUS_FORMAT = 4,
  // Checkpoint and vocabulary (or shapes) disagree.
  C2V2L_STATUS_MISMATCH = 5,
  // Text that normalizes to nothing, or an empty corpus.
  C2V2L_STATUS_EMPTY = 6,
  C2V2L_STATUS_INVALID_ARGUMENT = 7,
  // A Rust panic was caught at the boundary.
  C2V2L_STATUS_PANIC = 8,
} C2v2lStatus;

// A neural checkpoint with its vocabulary.
typedef struct C2v2lModel C2v2lModel;

// A trained n-gram classifier.
typedef struct C2v2lNgram C2v2lNgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *c2v2l_last_error(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void c2v2l_string_free(char *s);

// Normalizes a tweet; `*out` receives its tokens joined by single spaces.
//
// # Safety
// `text` must be a nul-terminated string and `out` a valid pointer.
enum C2v2lStatus c2v2l_normalize(const char *text, char **out);

// Loads an n-gram classifier file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum C2v2lStatus c2v2l_ngram_load(const char *path, struct C2v2lNgram **out);

// Classifies a tweet; `*label` receives the language code or `und`.
//
// # Safety
// `model` must come from [`c2v2l_ngram_load`], `text` must be a
// nul-terminated string and `label` a valid pointer.
enum C2v2lStatus c2v2l_ngram_classify(const struct C2v2lNgram *model,
                                      const char *text,
                                      char **label);

// # Safety
// `model` must come from [`c2v2l_ngram_load`] and not have been freed.
void c2v2l_ngram_free(struct C2v2lNgram *model);

// Loads a neural checkpoint, refusing it if `vocab_path` is not the
// vocabulary it was trained with.
//
// # Safety
// Paths must be nul-terminated strings and `out` a valid pointer.
enum C2v2lStatus c2v2l_model_load(const char *vocab_path,
                                  const char *checkpoint_path,
                                  struct C2v2lModel **out);

// Number of output labels; 0 for a null handle.
//
// # Safety
// `model` must be null or come from [`c2v2l_model_load`].
size_t c2v2l_model_num_labels(const struct C2v2lModel *model);

// Label code at `index`.
//
// # Safety
// `model` must come from [`c2v2l_model_load`] and `out` be a valid pointer.
enum C2v2lStatus c2v2l_model_label(const struct C2v2lModel *model, size_t index, char **out);

// Writes the tweet's label distribution, in label order, into `probs`,
// which must hold `len` = [`c2v2l_model_num_labels`] values.
//
// # Safety
// `model` must come from [`c2v2l_model_load`], `text` must be a
// nul-terminated string and `probs` must point to `len` writable doubles.
enum C2v2lStatus c2v2l_model_predict(const struct C2v2lModel *model,
                                     const char *text,
                                     double *probs,
                                     size_t len);

// # Safety
// `model` must come from [`c2v2l_model_load`] and not have been freed.
void c2v2l_model_free(struct C2v2lModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* C2V2L_H */
