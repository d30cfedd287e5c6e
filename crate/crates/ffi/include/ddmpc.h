#ifndef DDMPC_H
#define DDMPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible entry point.
 */
typedef enum DdmpcStatus {
  DDMPC_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  DDMPC_STATUS_NULL_ARGUMENT = 1,
  /**
   * Malformed text, inconsistent dimensions or an unusable configuration.
   */
  DDMPC_STATUS_INVALID_INPUT = 2,
  /**
   * The pipeline ran but no certified controller came out of it.
   */
  DDMPC_STATUS_FAILED = 3,
  /**
   * The output buffer is shorter than required.
   */
  DDMPC_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  DDMPC_STATUS_PANIC = 5,
} DdmpcStatus;

/**
 * Synthesized gain with its certificate and the configuration behind it.
 */
typedef struct DdmpcController DdmpcController;

/**
 * Recorded input/state trajectory.
 */
typedef struct DdmpcDataset DdmpcDataset;

/**
 * Closed-loop summary filled by [`ddmpc_simulate`].
 */
typedef struct DdmpcSimSummary {
  size_t steps;
  double total_cost;
  /**
   * 1 if the state reached the convergence threshold.
   */
  int converged;
  /**
   * First step below the threshold, or -1.
   */
  int64_t convergence_step;
  double max_input_abs;
  /**
   * Smallest constraint slack along the run (negative means violated).
   */
  double min_margin;
} DdmpcSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *ddmpc_last_error(void);

/**
 * Library version as a static string.
 */
const char *ddmpc_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library or be null.
 */
void ddmpc_string_free(char *s);

/**
 * Builds a dataset from `x` (n by t+1) and `u` (m by t), both row-major.
 *
 * # Safety
 * `x` and `u` must point to `n*(t+1)` and `m*t` doubles; `out` must be valid.
 */
enum DdmpcStatus ddmpc_dataset_new(size_t n,
                                   size_t m,
                                   size_t t,
                                   const double *x,
                                   const double *u,
                                   struct DdmpcDataset **out);

/**
 * Parses a dataset in the JSON format written by `ddmpc gen`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid.
 */
enum DdmpcStatus ddmpc_dataset_from_json(const char *json, struct DdmpcDataset **out);

/**
 * JSON rendering of a dataset; free with [`ddmpc_string_free`].
 *
 * # Safety
 * `d` must be a live dataset handle or null.
 */
char *ddmpc_dataset_to_json(const struct DdmpcDataset *d);

/**
 * Writes state dimension, input dimension and length.
 *
 * # Safety
 * `d` must be a live handle; the outputs must be valid or null.
 */
enum DdmpcStatus ddmpc_dataset_dims(const struct DdmpcDataset *d, size_t *n, size_t *m, size_t *t);

/**
 * # Safety
 * `d` must come from this library or be null; it is invalid afterwards.
 */
void ddmpc_dataset_free(struct DdmpcDataset *d);

/**
 * Synthesizes a controller from a TOML (or JSON when `config_is_json` is
 * nonzero) configuration and `count` datasets.
 *
 * # Safety
 * `config` must be NUL-terminated; `datasets` must hold `count` live handles.
 */
enum DdmpcStatus ddmpc_synthesize(const char *config,
                                  int config_is_json,
                                  const struct DdmpcDataset *const *datasets_ptr,
                                  size_t count,
                                  struct DdmpcController **out);

/**
 * Loads a controller file written by `ddmpc synth`.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be valid.
 */
enum DdmpcStatus ddmpc_controller_from_json(const char *json, struct DdmpcController **out);

/**
 * Controller file as JSON; free with [`ddmpc_string_free`].
 *
 * # Safety
 * `c` must be a live controller handle or null.
 */
char *ddmpc_controller_to_json(const struct DdmpcController *c);

/**
 * # Safety
 * `c` must come from this library or be null; it is invalid afterwards.
 */
void ddmpc_controller_free(struct DdmpcController *c);

/**
 * Writes the state and input dimensions.
 *
 * # Safety
 * `c` must be a live handle; the outputs must be valid or null.
 */
enum DdmpcStatus ddmpc_controller_dims(const struct DdmpcController *c, size_t *n, size_t *m);

/**
 * Copies the gain K (m by n, row-major) into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum DdmpcStatus ddmpc_controller_gain(const struct DdmpcController *c, double *out, size_t len);

/**
 * Copies the Lyapunov matrix P (n by n, row-major) into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum DdmpcStatus ddmpc_controller_lyapunov(const struct DdmpcController *c,
                                           double *out,
                                           size_t len);

/**
 * Writes the certified cost bound α.
 *
 * # Safety
 * `alpha` must be valid.
 */
enum DdmpcStatus ddmpc_controller_alpha(const struct DdmpcController *c, double *alpha);

/**
 * Re-checks the certificate against `count` datasets. `pass` receives 1 or
 * 0; `report_json`, if non-null, receives the full report (free with
 * [`ddmpc_string_free`]).
 *
 * # Safety
 * Handles must be live; `pass` must be valid; `report_json` valid or null.
 */
enum DdmpcStatus ddmpc_verify(const struct DdmpcController *c,
                              const struct DdmpcDataset *const *datasets_ptr,
                              size_t count,
                              int *pass,
                              char **report_json);

/**
 * Simulates `u = K x` on a plant given in TOML from `x0` (length n).
 *
 * # Safety
 * `plant_toml` NUL-terminated; `x0` holds `n` doubles; `out` valid.
 */
enum DdmpcStatus ddmpc_simulate(const struct DdmpcController *c,
                                const char *plant_toml,
                                const double *x0,
                                size_t n,
                                size_t steps,
                                struct DdmpcSimSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDMPC_H */
