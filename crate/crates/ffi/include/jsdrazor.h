#ifndef JSDRAZOR_H
#define JSDRAZOR_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define JSDR_OK 0

#define JSDR_ERR_EMPTY_DATA 1

#define JSDR_ERR_DIMENSION 2

#define JSDR_ERR_DOMAIN 3

#define JSDR_ERR_CONFIG 4

#define JSDR_ERR_UNDERFLOW 5

#define JSDR_ERR_BOUNDARY 6

#define JSDR_ERR_SAMPLE_TOO_SMALL 7

#define JSDR_ERR_UNSUPPORTED_DIMENSION 8

#define JSDR_ERR_HESSIAN_NOT_PD 9

#define JSDR_ERR_SIMULATOR_CONTRACT 10

#define JSDR_ERR_SIMULATOR 11

#define JSDR_ERR_CONSTRAINT 12

#define JSDR_ERR_UNSUPPORTED_SCALE 13

#define JSDR_ERR_IO 14

#define JSDR_ERR_NULL_POINTER 100

#define JSDR_ERR_INVALID_UTF8 101

#define JSDR_ERR_BUFFER_TOO_SMALL 102

#define JSDR_ERR_PANIC 103

// Opaque parametric model.
typedef struct JsdrModel JsdrModel;

// Fit result written by the fitting functions.
typedef struct JsdrFit {
  // Attained divergence (JSD/BOLFI) or −ln likelihood (ML).
  double objective;
  // Criterion value: SIC-JSD, SIC or SIC-BOLFI.
  double score;
  size_t evaluations;
  bool converged;
} JsdrFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next library call on the same thread.
const char *jsdr_last_error_message(void);

// Library version as a static string.
const char *jsdr_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void jsdr_string_free(char *s);

// Jensen–Shannon divergence in nats between two length-`k` distributions.
//
// # Safety
// `p` and `q` must point to `k` readable doubles; `out` must be writable.
int32_t jsdr_jsd(const double *p, const double *q, size_t k, double *out);

// Kullback–Leibler divergence KL(p‖q); may be +infinity.
//
// # Safety
// As for [`jsdr_jsd`].
int32_t jsdr_kl(const double *p, const double *q, size_t k, double *out);

// Variation distance sum |p_i − q_i|, in [0, 2].
//
// # Safety
// As for [`jsdr_jsd`].
int32_t jsdr_total_variation(const double *p, const double *q, size_t k, double *out);

// Three-category example model with 0, 1 or 2 free parameters on [-3, 3].
//
// # Safety
// `out` must be writable.
int32_t jsdr_model_example(size_t active_dims, struct JsdrModel **out);

// 2×2 log-linear model on [-2, 2]^d; `saturated` selects the
// three-parameter variant.
//
// # Safety
// `out` must be writable.
int32_t jsdr_model_loglinear(bool saturated, struct JsdrModel **out);

// Multilogit model from a row-major (k−1)×q predictor matrix, using the
// first `active_dims` columns, on the box [lower, upper].
//
// # Safety
// `predictors` must hold `rows * cols` doubles; `lower` and `upper` must
// hold `active_dims` doubles each; `name` may be NULL.
int32_t jsdr_model_multilogit(const char *name,
                              const double *predictors,
                              size_t rows,
                              size_t cols,
                              size_t active_dims,
                              const double *lower,
                              const double *upper,
                              struct JsdrModel **out);

// # Safety
// `m` must come from a `jsdr_model_*` constructor and not have been freed.
void jsdr_model_free(struct JsdrModel *m);

// Number of free parameters, or 0 for NULL.
//
// # Safety
// `m` must be NULL or a live model.
size_t jsdr_model_dim(const struct JsdrModel *m);

// Number of categories, or 0 for NULL.
//
// # Safety
// `m` must be NULL or a live model.
size_t jsdr_model_k(const struct JsdrModel *m);

// Category probabilities at θ, written to `out` (capacity `k`).
//
// # Safety
// `theta` must hold `d` doubles and `out` must hold `k` doubles.
int32_t jsdr_model_probs(const struct JsdrModel *m,
                         const double *theta,
                         size_t d,
                         double *out,
                         size_t k);

// Minimum-JSD fit and SIC-JSD score on observed counts.
//
// # Safety
// `counts` must hold `k` values; `theta_out` must hold `theta_capacity`
// doubles (may be NULL when the model has no parameters); `out` writable.
int32_t jsdr_fit_sic_jsd(const struct JsdrModel *m,
                         const uint64_t *counts_ptr,
                         size_t k,
                         uint64_t seed,
                         double *theta_out,
                         size_t theta_capacity,
                         struct JsdrFit *out);

// Maximum-likelihood fit and SIC score on observed counts.
//
// # Safety
// As for [`jsdr_fit_sic_jsd`].
int32_t jsdr_fit_sic(const struct JsdrModel *m,
                     const uint64_t *counts_ptr,
                     size_t k,
                     uint64_t seed,
                     double *theta_out,
                     size_t theta_capacity,
                     struct JsdrFit *out);

// SIC-BOLFI with the model used only as a multinomial simulator:
// `budget` simulator calls, default BOLFI settings otherwise.
//
// # Safety
// As for [`jsdr_fit_sic_jsd`].
int32_t jsdr_fit_sic_bolfi(const struct JsdrModel *m,
                           const uint64_t *counts_ptr,
                           size_t k,
                           size_t budget,
                           uint64_t seed,
                           double *theta_out,
                           size_t theta_capacity,
                           struct JsdrFit *out);

// Score `n_models` models on the counts and return the report as a JSON
// string in `json_out` (free with `jsdr_string_free`). `with_sic` adds SIC
// scores. The selected model index is in the report.
//
// # Safety
// `models` must hold `n_models` live model pointers; `counts` must hold `k`
// values; `json_out` must be writable.
int32_t jsdr_score_models_json(const struct JsdrModel *const *models,
                               size_t n_models,
                               const uint64_t *counts_ptr,
                               size_t k,
                               bool with_sic,
                               uint64_t seed,
                               char **json_out);

// Run an experiment from a TOML config string (JSON when `is_json`),
// write selections.csv, rates.csv and report.json to `out_dir` (NULL uses
// the config's output_dir), and return the report JSON in `json_out`
// (may be NULL).
//
// # Safety
// `config` must be a NUL-terminated string; `out_dir` NULL or
// NUL-terminated; `json_out` NULL or writable.
int32_t jsdr_run_experiment(const char *config,
                            bool is_json,
                            const char *out_dir,
                            size_t jobs,
                            char **json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JSDRAZOR_H */
