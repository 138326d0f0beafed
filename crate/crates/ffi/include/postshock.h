#ifndef POSTSHOCK_H
#define POSTSHOCK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsMethod {
  PS_METHOD_ADJ = 0,
  PS_METHOD_WADJ = 1,
  PS_METHOD_IVW = 2,
} PsMethod;

typedef enum PsProcedure {
  PS_PROCEDURE_BU = 0,
  PS_PROCEDURE_BF = 1,
} PsProcedure;

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_INPUT = 2,
  PS_STATUS_PARSE = 3,
  PS_STATUS_NUMERICAL = 4,
  PS_STATUS_IO = 5,
  PS_STATUS_BUFFER_TOO_SMALL = 6,
  PS_STATUS_PANIC = 7,
} PsStatus;

/**
 * Opaque result of `ps_assess`.
 */
typedef struct PsAssessment PsAssessment;

/**
 * Opaque result of `ps_loocv`.
 */
typedef struct PsLoocvReport PsLoocvReport;

/**
 * Opaque donor pool.
 */
typedef struct PsPool PsPool;

/**
 * Bootstrap settings. Obtain defaults from `ps_bootstrap_options_default`.
 */
typedef struct PsBootstrapOptions {
  enum PsProcedure procedure;
  size_t replicates;
  uint64_t seed;
  double norm_order;
  bool standardize;
} PsBootstrapOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ps_last_error_message(void);

struct PsBootstrapOptions ps_bootstrap_options_default(void);

/**
 * Loads a pool from the long-format data CSV and the metadata CSV.
 *
 * # Safety
 * `data_path` and `meta_path` must be NUL-terminated strings; `out` must be
 * writable.
 */
enum PsStatus ps_pool_load(const char *data_path, const char *meta_path, struct PsPool **out);

/**
 * # Safety
 * `pool` must be a live handle from `ps_pool_load`.
 */
enum PsStatus ps_pool_donor_count(const struct PsPool *pool, size_t *n);

/**
 * # Safety
 * `pool` must be null or a handle from `ps_pool_load` not yet freed.
 */
void ps_pool_free(struct PsPool *pool);

/**
 * Fits the donors, aggregates their shocks, bootstraps and forecasts.
 *
 * # Safety
 * `pool` must be a live handle, `options` readable, `out` writable.
 */
enum PsStatus ps_assess(const struct PsPool *pool,
                        const struct PsBootstrapOptions *options,
                        struct PsAssessment **out);

/**
 * # Safety
 * `a` must be a live handle and `value` writable.
 */
enum PsStatus ps_assessment_estimate(const struct PsAssessment *a,
                                     enum PsMethod method,
                                     double *value);

/**
 * # Safety
 * `a` must be a live handle and `value` writable.
 */
enum PsStatus ps_assessment_bootstrap_var(const struct PsAssessment *a,
                                          enum PsMethod method,
                                          double *value);

/**
 * # Safety
 * `a` must be a live handle and `value` writable.
 */
enum PsStatus ps_assessment_delta_hat(const struct PsAssessment *a,
                                      enum PsMethod method,
                                      double *value);

/**
 * Writes 1 when the adjusted forecast is preferred, else 0.
 *
 * # Safety
 * `a` must be a live handle and `decision` writable.
 */
enum PsStatus ps_assessment_decision(const struct PsAssessment *a,
                                     enum PsMethod method,
                                     int32_t *decision);

/**
 * # Safety
 * `a` must be a live handle and `value` writable.
 */
enum PsStatus ps_assessment_forecast1(const struct PsAssessment *a, double *value);

/**
 * # Safety
 * `a` must be a live handle and `value` writable.
 */
enum PsStatus ps_assessment_forecast2(const struct PsAssessment *a,
                                      enum PsMethod method,
                                      double *value);

/**
 * Copies the simplex weights into `buf`. `len_out` always receives the
 * number of donors; `PS_STATUS_BUFFER_TOO_SMALL` is returned if `cap` is
 * short.
 *
 * # Safety
 * `a` must be a live handle, `buf` writable for `cap` doubles, `len_out`
 * writable.
 */
enum PsStatus ps_assessment_weights(const struct PsAssessment *a,
                                    double *buf,
                                    size_t cap,
                                    size_t *len_out);

/**
 * Serializes the assessment as JSON. Release with `ps_string_free`.
 *
 * # Safety
 * `a` must be a live handle and `json` writable.
 */
enum PsStatus ps_assessment_to_json(const struct PsAssessment *a, char **json);

/**
 * # Safety
 * `a` must be null or a live handle from `ps_assess`.
 */
void ps_assessment_free(struct PsAssessment *a);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void ps_string_free(char *s);

/**
 * Leave-one-out cross-validation. `k = 0` holds out every donor; otherwise
 * `k` donors are drawn without replacement.
 *
 * # Safety
 * `pool` must be a live handle, `options` readable, `out` writable.
 */
enum PsStatus ps_loocv(const struct PsPool *pool,
                       const struct PsBootstrapOptions *options,
                       size_t k,
                       struct PsLoocvReport **out);

/**
 * # Safety
 * `report` must be a live handle and `value` writable.
 */
enum PsStatus ps_loocv_c_bar(const struct PsLoocvReport *report,
                             enum PsMethod method,
                             double *value);

/**
 * # Safety
 * `report` must be null or a live handle from `ps_loocv`.
 */
void ps_loocv_free(struct PsLoocvReport *report);

/**
 * Simple average of `n` shock estimates.
 *
 * # Safety
 * `alphas` must hold `n` doubles; `value` must be writable.
 */
enum PsStatus ps_alpha_adj(const double *alphas, size_t n, double *value);

/**
 * Inverse-variance weighted average of `n` shock estimates.
 *
 * # Safety
 * `alphas` and `variances` must hold `n` doubles; `value` must be writable.
 */
enum PsStatus ps_alpha_ivw(const double *alphas, const double *variances, size_t n, double *value);

/**
 * Simplex weights matching `x_target` (length `p`) by the rows of
 * `donors` (`n` x `p`, row-major). `weights` receives `n` doubles.
 *
 * # Safety
 * Buffers must have the stated sizes; `objective` may be null.
 */
enum PsStatus ps_solve_weights(const double *x_target,
                               const double *donors,
                               size_t n,
                               size_t p,
                               double norm_order,
                               bool standardize,
                               double *weights,
                               double *objective);

/**
 * Plug-in risk reduction for `method` given its estimate, the weighted
 * estimate and the bootstrap variance.
 *
 * # Safety
 * `value` must be writable.
 */
enum PsStatus ps_risk_reduction(enum PsMethod method,
                                double alpha,
                                double alpha_wadj,
                                double bootstrap_var,
                                double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSTSHOCK_H */
