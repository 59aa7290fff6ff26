#ifndef CHROMSPIN_H
#define CHROMSPIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every call.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_PARSE = 3,
  CS_STATUS_VALIDATION = 4,
  CS_STATUS_CONFIG = 5,
  CS_STATUS_DOMAIN = 6,
  CS_STATUS_NUMERICAL = 7,
  CS_STATUS_DATA = 8,
  CS_STATUS_IO = 9,
  CS_STATUS_OUT_OF_RANGE = 10,
  CS_STATUS_PANIC = 11,
} CsStatus;

/**
 * Run configuration.
 */
typedef struct CsConfig CsConfig;

/**
 * Fit result with its parameter names as C strings.
 */
typedef struct CsFit CsFit;

/**
 * Simulated sweep.
 */
typedef struct CsSweep CsSweep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread; empty if none failed.
 */
const char *cs_last_error_message(void);

/**
 * Free a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void cs_string_free(char *s);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CsStatus cs_config_default(struct CsConfig **out);

/**
 * Parse and validate a JSON configuration. An empty document gives the defaults.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be a valid pointer.
 */
enum CsStatus cs_config_from_json(const char *json, struct CsConfig **out);

/**
 * Resolved configuration as JSON; free with `cs_string_free`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be a valid pointer.
 */
enum CsStatus cs_config_to_json(const struct CsConfig *cfg, char **out);

/**
 * Replace the noise seed.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum CsStatus cs_config_set_seed(struct CsConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must come from this library and not be freed twice. Null is ignored.
 */
void cs_config_free(struct CsConfig *cfg);

/**
 * Run the configured protocol.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be a valid pointer.
 */
enum CsStatus cs_simulate(const struct CsConfig *cfg, struct CsSweep **out);

/**
 * Number of sweep points.
 *
 * # Safety
 * `sweep` must be a live handle; `out` must be a valid pointer.
 */
enum CsStatus cs_sweep_len(const struct CsSweep *sweep, size_t *out);

/**
 * Point `index`: sweep value, expected counts, sampled counts and σ. Any
 * output pointer may be null.
 *
 * # Safety
 * `sweep` must be a live handle; non-null outputs must be valid.
 */
enum CsStatus cs_sweep_get(const struct CsSweep *sweep,
                           size_t index,
                           double *value,
                           double *mean_counts,
                           double *sampled_counts,
                           double *sigma);

/**
 * Sweep as CSV; free with `cs_string_free`.
 *
 * # Safety
 * `sweep` must be a live handle; `out` must be a valid pointer.
 */
enum CsStatus cs_sweep_to_csv(const struct CsSweep *sweep, char **out);

/**
 * # Safety
 * `sweep` must come from this library and not be freed twice. Null is ignored.
 */
void cs_sweep_free(struct CsSweep *sweep);

/**
 * Fit `model` to n points. `sigma` may be null (unit weights). `theta0` may
 * be null (data-driven start); for eseem_model its length sets the number of
 * modulation components.
 *
 * # Safety
 * Arrays must hold `n` (or `n_theta`) values; `out` must be a valid pointer.
 */
enum CsStatus cs_fit(const char *model,
                     const double *x,
                     const double *y,
                     const double *sigma,
                     size_t n,
                     const double *theta0,
                     size_t n_theta,
                     struct CsFit **out);

/**
 * Number of model parameters.
 *
 * # Safety
 * `fit` must be a live handle; `out` must be a valid pointer.
 */
enum CsStatus cs_fit_param_count(const struct CsFit *fit, size_t *out);

/**
 * Value and standard error of parameter `index`; the name pointer stays
 * owned by the fit. Any output pointer may be null.
 *
 * # Safety
 * `fit` must be a live handle; non-null outputs must be valid.
 */
enum CsStatus cs_fit_param(const struct CsFit *fit,
                           size_t index,
                           const char **name,
                           double *value,
                           double *error);

/**
 * χ², reduced χ² and the convergence flag. Any output pointer may be null.
 *
 * # Safety
 * `fit` must be a live handle; non-null outputs must be valid.
 */
enum CsStatus cs_fit_chi2(const struct CsFit *fit,
                          double *chi2,
                          double *reduced_chi2,
                          bool *converged);

/**
 * Fit report as JSON; free with `cs_string_free`.
 *
 * # Safety
 * `fit` must be a live handle; `out` must be a valid pointer.
 */
enum CsStatus cs_fit_to_json(const struct CsFit *fit, char **out);

/**
 * # Safety
 * `fit` must come from this library and not be freed twice. Null is ignored.
 */
void cs_fit_free(struct CsFit *fit);

/**
 * Evaluate `model` with parameters `theta` at n points into `y_out`.
 *
 * # Safety
 * `theta` holds `n_theta` values; `x` and `y_out` hold `n`.
 */
enum CsStatus cs_eval_model(const char *model,
                            const double *theta,
                            size_t n_theta,
                            const double *x,
                            size_t n,
                            double *y_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHROMSPIN_H */
