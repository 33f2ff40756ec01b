#ifndef SPINDOE_H
#define SPINDOE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Codes 1 to 17 mirror the library errors.
typedef enum SpindoeStatus {
  SPINDOE_STATUS_OK = 0,
  SPINDOE_STATUS_LENGTH_MISMATCH = 1,
  SPINDOE_STATUS_DEGENERATE_CONFIGURATION = 2,
  SPINDOE_STATUS_INVALID_PARAMS = 3,
  SPINDOE_STATUS_NON_CONVERGENCE = 4,
  SPINDOE_STATUS_SINGULAR_BASIS = 5,
  SPINDOE_STATUS_OUTSIDE_DISK = 6,
  SPINDOE_STATUS_TOO_FEW_DOTS = 7,
  SPINDOE_STATUS_NO_BASIS_ABOVE_THRESHOLD = 8,
  SPINDOE_STATUS_EMPTY_CORRESPONDENCES = 9,
  SPINDOE_STATUS_INFEASIBLE_SEPARATION = 10,
  SPINDOE_STATUS_TOO_FEW_SAMPLES = 11,
  SPINDOE_STATUS_NON_UNIQUE_AXIS = 12,
  SPINDOE_STATUS_NO_CONSENSUS = 13,
  SPINDOE_STATUS_NON_POSITIVE_NORM = 14,
  SPINDOE_STATUS_NON_MONOTONIC_TIME = 15,
  SPINDOE_STATUS_FORMAT = 16,
  SPINDOE_STATUS_IO = 17,
  SPINDOE_STATUS_NULL_POINTER = 100,
  SPINDOE_STATUS_INVALID_UTF8 = 101,
  SPINDOE_STATUS_BUFFER_TOO_SMALL = 102,
  SPINDOE_STATUS_PANIC = 103,
} SpindoeStatus;

// Reference dot layout.
typedef struct SpindoePattern SpindoePattern;

// Hash table of a pattern, ready for recognition.
typedef struct SpindoeTable SpindoeTable;

typedef struct SpindoeOrientation {
  double qw;
  double qx;
  double qy;
  double qz;
  // Radians.
  double rmse;
  size_t n_matched;
} SpindoeOrientation;

typedef struct SpindoeSpin {
  // rad/s.
  double wx;
  double wy;
  double wz;
  double rps;
  double residual_rms;
  size_t n_inliers;
} SpindoeSpin;

typedef struct SpindoeDampening {
  double coefficient;
  // rad/s.
  double omega0;
  double r2;
} SpindoeDampening;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on this thread.
const char *spindoe_last_error(void);

// Library version as a static NUL-terminated string.
const char *spindoe_version(void);

// Pattern from `n` unit vectors (`3n` doubles).
//
// # Safety
// `xyz` must point to `3n` doubles and `out` to writable storage.
enum SpindoeStatus spindoe_pattern_new(const double *xyz, size_t n, struct SpindoePattern **out);

// Pattern from its JSON file contents.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum SpindoeStatus spindoe_pattern_from_json(const char *json, struct SpindoePattern **out);

// Uniform random pattern with pairwise separation at least `min_separation`
// radians; with `iterations > 0` it is then optimized for hash-space spread.
//
// # Safety
// `out` must be writable.
enum SpindoeStatus spindoe_pattern_generate(size_t n,
                                            double min_separation,
                                            size_t iterations,
                                            uint64_t seed,
                                            struct SpindoePattern **out);

// Number of dots; 0 for NULL.
//
// # Safety
// `pattern` must be NULL or a live handle.
size_t spindoe_pattern_len(const struct SpindoePattern *pattern);

// Copies the dots into `xyz`, which holds `capacity` doubles.
//
// # Safety
// `pattern` must be a live handle and `xyz` writable for `capacity` doubles.
enum SpindoeStatus spindoe_pattern_dots(const struct SpindoePattern *pattern,
                                        double *xyz,
                                        size_t capacity);

// Writes the pattern JSON, NUL-terminated, into `buf`. `needed` receives
// the buffer size required, including the NUL, even when `buf` is too
// small or NULL.
//
// # Safety
// `pattern` must be a live handle, `buf` NULL or writable for `capacity`
// bytes, `needed` NULL or writable.
enum SpindoeStatus spindoe_pattern_to_json(const struct SpindoePattern *pattern,
                                           char *buf,
                                           size_t capacity,
                                           size_t *needed);

// # Safety
// `pattern` must be NULL or a handle not yet freed.
void spindoe_pattern_free(struct SpindoePattern *pattern);

// Hash table of `pattern` with dot model `(kappa, beta, alpha)`.
//
// # Safety
// `pattern` must be a live handle and `out` writable.
enum SpindoeStatus spindoe_table_build(const struct SpindoePattern *pattern,
                                       double kappa,
                                       double beta,
                                       double alpha,
                                       struct SpindoeTable **out);

// Hash table with the default dot model.
//
// # Safety
// `pattern` must be a live handle and `out` writable.
enum SpindoeStatus spindoe_table_build_default(const struct SpindoePattern *pattern,
                                               struct SpindoeTable **out);

// Number of entries; 0 for NULL.
//
// # Safety
// `table` must be NULL or a live handle.
size_t spindoe_table_len(const struct SpindoeTable *table);

// # Safety
// `table` must be NULL or a handle not yet freed.
void spindoe_table_free(struct SpindoeTable *table);

// Orientation of the ball from `n` observed unit vectors (camera frame,
// `z` towards the camera) with default recognition settings.
//
// # Safety
// `table` must be a live handle, `xyz` must hold `3n` doubles and `out`
// must be writable.
enum SpindoeStatus spindoe_recognize(const struct SpindoeTable *table,
                                     const double *xyz,
                                     size_t n,
                                     struct SpindoeOrientation *out);

// Spin of `n` timestamped orientations (`t`: `n` seconds, `wxyz`: `4n`
// quaternion components). With `robust` non-zero outliers are rejected by
// RANSAC seeded with `seed`, and `inlier_mask` (if not NULL, `n` bytes)
// receives 1 for inliers and 0 otherwise.
//
// # Safety
// Array arguments must have the stated lengths; `out` must be writable.
enum SpindoeStatus spindoe_spin_fit(const double *t,
                                    const double *wxyz,
                                    size_t n,
                                    int32_t robust,
                                    uint64_t seed,
                                    struct SpindoeSpin *out,
                                    uint8_t *inlier_mask);

// Exponential decay fit of spin norms (`n` times and norms in rad/s).
//
// # Safety
// `t` and `norms` must hold `n` doubles; `out` must be writable.
enum SpindoeStatus spindoe_dampening_fit(const double *t,
                                         const double *norms,
                                         size_t n,
                                         struct SpindoeDampening *out);

// Decay rate `12 pi nu r / m` (1/s).
//
// # Safety
// `out` must be writable.
enum SpindoeStatus spindoe_theoretical_dampening(double nu,
                                                 double radius,
                                                 double mass,
                                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINDOE_H */
