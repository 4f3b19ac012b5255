#ifndef DOPPLERGA_H
#define DOPPLERGA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum DgStatus {
  DG_STATUS_OK = 0,
  DG_STATUS_NULL_POINTER = 1,
  DG_STATUS_INVALID_ARGUMENT = 2,
  DG_STATUS_IO = 3,
  DG_STATUS_FORMAT = 4,
  // Recording too short for the model input.
  DG_STATUS_TOO_SHORT = 5,
  DG_STATUS_INTERNAL = 6,
} DgStatus;

// Per-frame features of one recording.
typedef struct DgFeatures DgFeatures;

// A trained model.
typedef struct DgModel DgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread (empty after success).
// The pointer stays valid until the next call on the same thread.
const char *dg_last_error(void);

// Library version as a static NUL-terminated string.
const char *dg_version(void);

// Loads a model file written by `dopplerga train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum DgStatus dg_model_load(const char *path, struct DgModel **out);

// Feature frames the model consumes (timesteps x width).
//
// # Safety
// `model` must be null or a live handle from [`dg_model_load`].
size_t dg_model_frames_needed(const struct DgModel *model);

// # Safety
// `model` must be null or a handle from [`dg_model_load`] not yet freed.
void dg_model_free(struct DgModel *model);

// Band-pass filters, resamples and extracts per-frame features from mono
// samples at any rate.
//
// # Safety
// `samples` must point to `len` doubles and `out` must be valid.
enum DgStatus dg_features_from_samples(const double *samples,
                                       size_t len,
                                       uint32_t sample_rate_hz,
                                       struct DgFeatures **out);

// Number of frames, 0 for a null handle.
//
// # Safety
// `features` must be null or a live handle.
size_t dg_features_len(const struct DgFeatures *features);

// Copies frame `index` as (energy, frequency, squared bandwidth, Q) into
// `out_values[4]`; `out_valid` receives 0 for silent frames.
//
// # Safety
// `features` must be a live handle; `out_values` must hold 4 doubles;
// `out_valid` may be null.
enum DgStatus dg_features_get(const struct DgFeatures *features,
                              size_t index,
                              double *out_values,
                              uint8_t *out_valid);

// # Safety
// `features` must be null or a handle not yet freed.
void dg_features_free(struct DgFeatures *features);

// Estimates gestational age in months from precomputed features.
//
// # Safety
// Both handles must be live and `out_months` valid.
enum DgStatus dg_estimate_features(const struct DgModel *model,
                                   const struct DgFeatures *features,
                                   double *out_months);

// Estimates gestational age in months directly from raw samples.
//
// # Safety
// `model` must be live, `samples` must point to `len` doubles and
// `out_months` must be valid.
enum DgStatus dg_estimate_samples(const struct DgModel *model,
                                  const double *samples,
                                  size_t len,
                                  uint32_t sample_rate_hz,
                                  double *out_months);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOPPLERGA_H */
