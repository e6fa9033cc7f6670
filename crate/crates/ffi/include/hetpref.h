#ifndef HETPREF_H
#define HETPREF_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum hp_status_t {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_POINTER = 1,
  HP_STATUS_INVALID_ARGUMENT = 2,
  HP_STATUS_DIMENSION_MISMATCH = 3,
  HP_STATUS_EMPTY_DATASET = 4,
  /**
   * Divergence, a singular information matrix or a negative variance.
   */
  HP_STATUS_NUMERICAL = 5,
  HP_STATUS_IO = 6,
  /**
   * Malformed, tampered or unsupported file contents.
   */
  HP_STATUS_FORMAT = 7,
  HP_STATUS_PANIC = 8,
} hp_status_t;

typedef enum hp_variance_mode_t {
  HP_VARIANCE_MODE_INDEPENDENT = 0,
  HP_VARIANCE_MODE_DEPENDENT_UPPER_BOUND = 1,
} hp_variance_mode_t;

typedef enum hp_verdict_t {
  HP_VERDICT_WIN = 0,
  HP_VERDICT_LOSS = 1,
  HP_VERDICT_TIE = 2,
} hp_verdict_t;

typedef enum hp_variant_t {
  HP_VARIANT_BON = 0,
  HP_VARIANT_PBON = 1,
  HP_VARIANT_BON_KL = 2,
  HP_VARIANT_PBON_KL = 3,
  HP_VARIANT_BON_WD = 4,
  HP_VARIANT_PBON_WD = 5,
  HP_VARIANT_BON_L = 6,
  HP_VARIANT_PBON_L = 7,
} hp_variant_t;

/**
 * Fitted parameters with their covariance estimates.
 */
typedef struct hp_artifact_t hp_artifact_t;

/**
 * Preference data.
 */
typedef struct hp_dataset_t hp_dataset_t;

/**
 * Result of a fit.
 */
typedef struct hp_fit_t hp_fit_t;

/**
 * Fitting options. Starting points are drawn uniformly from
 * `[init_lo, init_hi]`. `screen_iters = 0` disables screening and a
 * non-positive box bound disables that projection.
 */
typedef struct hp_fit_config_t {
  double eta1;
  double eta2;
  size_t max_iters;
  size_t restarts;
  size_t screen_iters;
  uint64_t seed;
  double grad_tol;
  double init_lo;
  double init_hi;
  double box_theta;
  double box_gamma;
} hp_fit_config_t;

typedef struct hp_fit_summary_t {
  size_t iterations_run;
  bool converged;
  double final_loss;
  size_t chosen_restart;
} hp_fit_summary_t;

typedef struct hp_interval_t {
  double lower;
  double upper;
  double point;
  double alpha;
} hp_interval_t;

typedef struct hp_test_result_t {
  double diff_point;
  struct hp_interval_t interval;
  enum hp_verdict_t verdict;
} hp_test_result_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full message length
 * in bytes, excluding the terminator. Returns 0 after a successful call.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t hp_last_error(char *buf, size_t len);

/**
 * Standard normal quantile for `p` in (0, 1).
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum hp_status_t hp_normal_quantile(double p, double *out);

/**
 * Builds a dataset from columns: `psi0` and `y` have `n` entries, `psi`
 * is `n x d2` and `z` is `n x d1`.
 *
 * # Safety
 * Each array must be valid for the stated number of elements and `out`
 * valid for a write.
 */
enum hp_status_t hp_dataset_new(size_t n,
                                size_t d1,
                                size_t d2,
                                const double *psi0,
                                const double *psi,
                                const double *z,
                                const uint8_t *y,
                                struct hp_dataset_t **out);

/**
 * Draws `n` comparisons from the built-in simulation design.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum hp_status_t hp_dataset_simulate(size_t n, uint64_t seed, struct hp_dataset_t **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for a write.
 */
enum hp_status_t hp_dataset_read(const char *path, struct hp_dataset_t **out);

/**
 * # Safety
 * `data` must come from this library; `path` must be NUL-terminated.
 */
enum hp_status_t hp_dataset_write(const struct hp_dataset_t *data, const char *path);

/**
 * # Safety
 * `data` must come from this library; the outputs must be null or valid
 * for a write.
 */
enum hp_status_t hp_dataset_shape(const struct hp_dataset_t *data,
                                  size_t *n,
                                  size_t *d1,
                                  size_t *d2);

/**
 * # Safety
 * `data` must be null or come from this library, and is invalid afterwards.
 */
void hp_dataset_free(struct hp_dataset_t *data);

/**
 * Default fitting options: single start, 2000 iterations.
 */
struct hp_fit_config_t hp_fit_config_default(void);

/**
 * Fits the model. `config` may be null for the defaults.
 *
 * # Safety
 * `data` must come from this library, `config` must be null or valid and
 * `out` valid for a write.
 */
enum hp_status_t hp_fit(const struct hp_dataset_t *data,
                        const struct hp_fit_config_t *config,
                        struct hp_fit_t **out);

/**
 * Copies the fitted `theta` (`len` must equal d1) and `gamma` (d2).
 *
 * # Safety
 * `fit` must come from this library; each output must be valid for its
 * length.
 */
enum hp_status_t hp_fit_params(const struct hp_fit_t *fit,
                               double *theta,
                               size_t theta_len,
                               double *gamma,
                               size_t gamma_len);

/**
 * # Safety
 * `fit` must come from this library and `out` valid for a write.
 */
enum hp_status_t hp_fit_summary(const struct hp_fit_t *fit, struct hp_fit_summary_t *out);

/**
 * # Safety
 * `fit` must be null or come from this library, and is invalid afterwards.
 */
void hp_fit_free(struct hp_fit_t *fit);

/**
 * Covariance estimates at the fitted parameters.
 *
 * # Safety
 * `data` and `fit` must come from this library and `out` valid for a write.
 */
enum hp_status_t hp_infer(const struct hp_dataset_t *data,
                          const struct hp_fit_t *fit,
                          struct hp_artifact_t **out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid for a write.
 */
enum hp_status_t hp_artifact_read(const char *path, struct hp_artifact_t **out);

/**
 * # Safety
 * `artifact` must come from this library; `path` must be NUL-terminated.
 */
enum hp_status_t hp_artifact_write(const struct hp_artifact_t *artifact, const char *path);

/**
 * # Safety
 * `artifact` must come from this library; the outputs must be null or
 * valid for a write.
 */
enum hp_status_t hp_artifact_shape(const struct hp_artifact_t *artifact,
                                   size_t *n,
                                   size_t *d1,
                                   size_t *d2);

/**
 * # Safety
 * As [`hp_fit_params`].
 */
enum hp_status_t hp_artifact_params(const struct hp_artifact_t *artifact,
                                    double *theta,
                                    size_t theta_len,
                                    double *gamma,
                                    size_t gamma_len);

/**
 * # Safety
 * `artifact` must be null or come from this library, and is invalid
 * afterwards.
 */
void hp_artifact_free(struct hp_artifact_t *artifact);

/**
 * Level `1 - alpha` interval for the reward with features `phi`.
 *
 * # Safety
 * `artifact` must come from this library, `phi` valid for `len` elements
 * and `out` valid for a write.
 */
enum hp_status_t hp_reward_ci(const struct hp_artifact_t *artifact,
                              const double *phi,
                              size_t len,
                              double alpha,
                              struct hp_interval_t *out);

/**
 * Lower confidence bound of the reward.
 *
 * # Safety
 * As [`hp_reward_ci`].
 */
enum hp_status_t hp_pessimistic_reward(const struct hp_artifact_t *artifact,
                                       const double *phi,
                                       size_t len,
                                       double alpha,
                                       double *out);

/**
 * Tests whether the answer with features `phi0` beats the one with `phi1`.
 *
 * # Safety
 * `artifact` must come from this library, `phi0` and `phi1` valid for
 * `len` elements and `out` valid for a write.
 */
enum hp_status_t hp_reward_diff_test(const struct hp_artifact_t *artifact,
                                     const double *phi0,
                                     const double *phi1,
                                     size_t len,
                                     double alpha,
                                     enum hp_variance_mode_t mode,
                                     struct hp_test_result_t *out);

/**
 * Picks one of `k` candidates whose features are the rows of the `k x d1`
 * matrix `phis`. `penalties` (KL or Wasserstein variants) and `lengths`
 * (length variants) may be null when the variant does not use them.
 * Writes the chosen row index to `chosen`.
 *
 * # Safety
 * `artifact` must come from this library, `phis` valid for `k * d1`
 * elements, `penalties` and `lengths` null or valid for `k` elements and
 * `chosen` valid for a write.
 */
enum hp_status_t hp_bon_select(const struct hp_artifact_t *artifact,
                               const double *phis,
                               size_t k,
                               size_t d1,
                               const double *penalties,
                               const uint32_t *lengths,
                               enum hp_variant_t variant,
                               double beta,
                               double alpha,
                               size_t *chosen);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HETPREF_H */
