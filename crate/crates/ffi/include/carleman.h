#ifndef CARLEMAN_H
#define CARLEMAN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CarlemanStatus {
  CARLEMAN_STATUS_OK = 0,
  CARLEMAN_STATUS_NULL_POINTER = 1,
  CARLEMAN_STATUS_INVALID_INPUT = 2,
  CARLEMAN_STATUS_CONFIG = 3,
  CARLEMAN_STATUS_BUDGET_EXCEEDED = 4,
  CARLEMAN_STATUS_DIVERGED = 5,
  CARLEMAN_STATUS_NUMERICAL = 6,
  CARLEMAN_STATUS_IO = 7,
  CARLEMAN_STATUS_PANIC = 8,
} CarlemanStatus;

typedef enum CarlemanNorm {
  CARLEMAN_NORM_ONE = 0,
  CARLEMAN_NORM_TWO = 1,
  CARLEMAN_NORM_INF = 2,
} CarlemanNorm;

/**
 * Opaque polynomial system with its default initial state.
 */
typedef struct CarlemanSystem CarlemanSystem;

typedef struct CarlemanSpectralSummary {
  double delta;
  double kappa1;
  double sigma;
  double norm_f2_1;
  double norm_f2_2;
  size_t zero_modes_removed;
} CarlemanSpectralSummary;

typedef struct CarlemanTruncationResult {
  double final_error;
  double sup_error;
  double mu;
  double dt;
} CarlemanTruncationResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *carleman_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *carleman_last_error(void);

/**
 * Build a system from a model config JSON object.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CarlemanStatus carleman_system_from_json(const char *json, struct CarlemanSystem **out);

/**
 * Upwind Burgers system on `n` interior points.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CarlemanStatus carleman_system_burgers(size_t n,
                                            double c,
                                            double beta,
                                            struct CarlemanSystem **out);

/**
 * Periodic KdV system on `n` points.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CarlemanStatus carleman_system_kdv(size_t n, double c, struct CarlemanSystem **out);

/**
 * FPU chain with `p` particles, state dimension `2p`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CarlemanStatus carleman_system_fpu(size_t p,
                                        double alpha,
                                        double k,
                                        struct CarlemanSystem **out);

/**
 * Release a system. NULL is ignored.
 *
 * # Safety
 * `system` must come from a constructor above and not be used afterwards.
 */
void carleman_system_free(struct CarlemanSystem *system);

/**
 * # Safety
 * `system` must be a live handle and `out` a valid pointer.
 */
enum CarlemanStatus carleman_system_dim(const struct CarlemanSystem *system, size_t *out);

/**
 * Polynomial degree of the coupling (2 or 3).
 *
 * # Safety
 * `system` must be a live handle and `out` a valid pointer.
 */
enum CarlemanStatus carleman_system_degree(const struct CarlemanSystem *system, size_t *out);

/**
 * Copy the initial state into `buf`, which must hold exactly `dim` values.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum CarlemanStatus carleman_system_initial_state(const struct CarlemanSystem *system,
                                                  double *buf,
                                                  size_t len);

/**
 * Resonance gap over combinations of order `2..=max_order`, with zero
 * modes and cancelling pairs excluded.
 *
 * # Safety
 * `system` must be a live handle and `out` a valid pointer.
 */
enum CarlemanStatus carleman_resonance_delta(const struct CarlemanSystem *system,
                                             size_t max_order,
                                             double *out);

/**
 * Eigen-diagnostics of the linear part and coupling norms.
 *
 * # Safety
 * `system` must be a live handle and `out` a valid pointer.
 */
enum CarlemanStatus carleman_spectral_summary(const struct CarlemanSystem *system,
                                              size_t max_order,
                                              struct CarlemanSpectralSummary *out);

/**
 * Gap between the nonlinear flow and the level-`levels` truncation from the
 * system's initial state. `dt <= 0` selects the default step and
 * `budget_bytes == 0` the default memory budget.
 *
 * # Safety
 * `system` must be a live handle and `out` a valid pointer.
 */
enum CarlemanStatus carleman_truncation_error(const struct CarlemanSystem *system,
                                              size_t levels,
                                              double t_end,
                                              double dt,
                                              enum CarlemanNorm norm,
                                              uint64_t budget_bytes,
                                              struct CarlemanTruncationResult *out);

/**
 * Run a single-cell experiment config and return the record as JSON in
 * `*out`, to be released with [`carleman_string_free`]. A diverged run
 * still produces a record and returns `Ok`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CarlemanStatus carleman_run_json(const char *config_json, uint64_t budget_bytes, char **out);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void carleman_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARLEMAN_H */
