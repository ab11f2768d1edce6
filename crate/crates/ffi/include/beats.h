#ifndef BEATS_H
#define BEATS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum BeatsStatus {
  BEATS_STATUS_OK = 0,
  BEATS_STATUS_NULL_POINTER = 1,
  BEATS_STATUS_INVALID_ARGUMENT = 2,
  BEATS_STATUS_NUMERIC = 3,
  BEATS_STATUS_IO = 4,
  BEATS_STATUS_FORMAT = 5,
  BEATS_STATUS_PANIC = 6,
} BeatsStatus;

/**
 * A trained or freshly initialized classifier.
 */
typedef struct BeatsModel BeatsModel;

/**
 * Mono audio with its sample rate.
 */
typedef struct BeatsWaveform BeatsWaveform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *beats_version(void);

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *beats_last_error(void);

/**
 * Entropic transport plan between uniform marginals for an `n×p` cost.
 *
 * `plan_out` receives `n*p` values. `iterations_out` and `residual_out`
 * may be null. A run that hits `max_iter` still fills the plan but returns
 * `BEATS_STATUS_NUMERIC`.
 *
 * # Safety
 * `cost` and `plan_out` must point to `n*p` doubles.
 */
enum BeatsStatus beats_sinkhorn(const double *cost,
                                size_t n,
                                size_t p,
                                double epsilon,
                                double tol,
                                size_t max_iter,
                                double *plan_out,
                                size_t *iterations_out,
                                double *residual_out);

/**
 * Exact optimal transport for a square `n×n` cost (n at most 6).
 *
 * # Safety
 * `cost` and `plan_out` must point to `n*n` doubles; `cost_out` may be null.
 */
enum BeatsStatus beats_exact_ot(const double *cost, size_t n, double *plan_out, double *cost_out);

/**
 * Transport-based pooling of `n×d` features onto `p×d` references.
 * `out` receives the `p×d` pooled matrix.
 *
 * # Safety
 * `features` must hold `n*d` doubles, `references` and `out` `p*d`.
 */
enum BeatsStatus beats_otk_pool(const double *features,
                                size_t n,
                                size_t d,
                                const double *references,
                                size_t p,
                                double epsilon,
                                double tol,
                                size_t max_iter,
                                double *out);

/**
 * Weighted sum of the three head losses. The weights must be nonnegative
 * and sum to one.
 *
 * # Safety
 * `loss_out` must be a valid pointer.
 */
enum BeatsStatus beats_joint_loss(double alpha,
                                  double beta,
                                  double gamma,
                                  double speech,
                                  double fused,
                                  double text,
                                  double *loss_out);

/**
 * Writes the default synthetic corpus with root `seed` into `out_dir`.
 * If `checksum_out` is not null it receives the 64-character sha256 of the
 * manifest and audio plus a nul, so it needs room for 65 bytes.
 *
 * # Safety
 * `out_dir` must be a nul-terminated path; `checksum_out` must be null or
 * hold `checksum_len` bytes.
 */
enum BeatsStatus beats_generate_dataset(const char *out_dir,
                                        uint64_t seed,
                                        char *checksum_out,
                                        size_t checksum_len);

/**
 * Waveform from `len` samples in [-1, 1].
 *
 * # Safety
 * `samples` must hold `len` doubles and `out` must be a valid pointer.
 */
enum BeatsStatus beats_waveform_new(const double *samples,
                                    size_t len,
                                    uint32_t sample_rate,
                                    struct BeatsWaveform **out_handle);

/**
 * Reads a 16-bit PCM mono WAV file.
 *
 * # Safety
 * `path` must be nul-terminated and `out` a valid pointer.
 */
enum BeatsStatus beats_waveform_read(const char *path, struct BeatsWaveform **out_handle);

/**
 * Writes the waveform as 16-bit PCM mono WAV.
 *
 * # Safety
 * `wave` must come from this library and `path` must be nul-terminated.
 */
enum BeatsStatus beats_waveform_write(const struct BeatsWaveform *wave, const char *path);

/**
 * Number of samples, 0 for a null handle.
 *
 * # Safety
 * `wave` must be null or come from this library.
 */
size_t beats_waveform_len(const struct BeatsWaveform *wave);

/**
 * Sample rate in Hz, 0 for a null handle.
 *
 * # Safety
 * `wave` must be null or come from this library.
 */
uint32_t beats_waveform_sample_rate(const struct BeatsWaveform *wave);

/**
 * Borrowed pointer to the samples, valid until the handle is freed.
 *
 * # Safety
 * `wave` must be null or come from this library.
 */
const double *beats_waveform_samples(const struct BeatsWaveform *wave);

/**
 * # Safety
 * `wave` must be null or come from this library, and not be used again.
 */
void beats_waveform_free(struct BeatsWaveform *wave);

/**
 * Untrained model with default architecture. `variant` is one of
 * `speech_only`, `bimodal_concat`, `beats_xformer`, `beats_otk`.
 *
 * # Safety
 * `variant` must be nul-terminated and `out` a valid pointer.
 */
enum BeatsStatus beats_model_new(const char *variant,
                                 uint64_t seed,
                                 struct BeatsModel **out_handle);

/**
 * Loads a model saved by `beats train` or [`beats_model_save`].
 *
 * # Safety
 * `path` must be nul-terminated and `out` a valid pointer.
 */
enum BeatsStatus beats_model_load(const char *path, struct BeatsModel **out_handle);

/**
 * # Safety
 * `model` must come from this library and `path` must be nul-terminated.
 */
enum BeatsStatus beats_model_save(const struct BeatsModel *model, const char *path);

/**
 * Class probabilities for one utterance, in the order request, question,
 * order. `english` is the space-separated transcript; it is ignored by the
 * speech-only variant. `label_out` (may be null) receives the argmax.
 *
 * # Safety
 * Handles must come from this library, `english` must be nul-terminated
 * and `probs_out` must hold 3 doubles.
 */
enum BeatsStatus beats_model_predict(const struct BeatsModel *model,
                                     const struct BeatsWaveform *wave,
                                     const char *english,
                                     double *probs_out,
                                     uint32_t *label_out);

/**
 * # Safety
 * `model` must be null or come from this library, and not be used again.
 */
void beats_model_free(struct BeatsModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEATS_H */
