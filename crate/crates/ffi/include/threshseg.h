#ifndef THRESHSEG_H
#define THRESHSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TS_INIT_STRIPES = 0,
  TS_INIT_CIRCLES = 1,
  TS_INIT_RANDOM = 2,
  TS_INIT_KMEANS = 3,
} TsInit;

typedef enum {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_IO = 3,
  TS_STATUS_FORMAT = 4,
  TS_STATUS_SHAPE_MISMATCH = 5,
  TS_STATUS_DECAY_VIOLATION = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

/**
 * Opaque image handle.
 */
typedef struct TsImage TsImage;

/**
 * Opaque segmentation result handle.
 */
typedef struct TsResult TsResult;

typedef struct {
  uint32_t phases;
  double dt;
  double lambda;
  double tau;
  uint32_t max_iter;
  TsInit init;
  uint64_t seed;
  /**
   * Nonzero to abort when the energy increases between iterations.
   */
  uint8_t assert_decay;
} TsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library defaults: 2 phases, dt 0.01, lambda 0.003, tau 0, 500
 * iterations, circles initialization, seed 0, decay check on.
 */
TsConfig ts_config_default(void);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ts_last_error_message(void);

/**
 * Builds an image from `width * height * channels` interleaved samples,
 * row-major, expected in `[0, 1]`.
 *
 * # Safety
 * `values` must point to `width * height * channels` readable doubles and
 * `out` must be a valid pointer.
 */
TsStatus ts_image_new(size_t width,
                      size_t height,
                      size_t channels,
                      const double *values,
                      TsImage **out);

/**
 * Loads a PNG, binary PGM or binary PPM and scales samples to `[0, 1]`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
TsStatus ts_image_load(const char *path, TsImage **out);

/**
 * # Safety
 * `image` must be null or a handle from this library not yet freed.
 */
void ts_image_free(TsImage *image);

/**
 * Segments `image`. A null `config` means the defaults.
 *
 * # Safety
 * `image` must be a live handle, `config` null or valid, `out` valid.
 */
TsStatus ts_solve(const TsImage *image, const TsConfig *config, TsResult **out);

/**
 * # Safety
 * `result` must be null or a handle from this library not yet freed.
 */
void ts_result_free(TsResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t ts_result_width(const TsResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t ts_result_height(const TsResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t ts_result_iterations(const TsResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
bool ts_result_converged(const TsResult *result);

/**
 * Total energy of the final partition, or NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double ts_result_energy(const TsResult *result);

/**
 * Copies the `width * height` phase labels, row-major, into `labels`.
 *
 * # Safety
 * `result` must be a live handle and `labels` must point to `len` writable
 * `uint16_t`.
 */
TsStatus ts_result_labels(const TsResult *result, uint16_t *labels, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THRESHSEG_H */
