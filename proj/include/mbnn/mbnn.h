#ifndef MBNN_MBNN_H
#define MBNN_MBNN_H

/* C interface to the masked Bayesian neural network engine.
 *
 * Every function returns an mbnn_status. On failure the message describing
 * the most recent error of the calling thread is available from
 * mbnn_last_error(). Handles are opaque and owned by the caller; release them
 * with the matching *_destroy function. Functions that fill a caller buffer
 * with text take (buf, cap, needed): `needed` receives the string length
 * including the terminating NUL, and MBNN_ERR_BUFFER is returned if cap is
 * too small (buf may then be NULL). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MBNN_BUILDING_LIBRARY)
#    define MBNN_API __declspec(dllexport)
#  else
#    define MBNN_API __declspec(dllimport)
#  endif
#else
#  define MBNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mbnn_status {
  MBNN_OK = 0,
  MBNN_ERR_INVALID_ARGUMENT = 1,
  MBNN_ERR_CONFIG = 2,
  MBNN_ERR_NUMERIC = 3,
  MBNN_ERR_IO = 4,
  MBNN_ERR_BUFFER = 5,
  MBNN_ERR_INTERNAL = 6
} mbnn_status;

MBNN_API const char* mbnn_version(void);
MBNN_API const char* mbnn_last_error(void);
MBNN_API const char* mbnn_status_string(mbnn_status status);

/* ---- networks ------------------------------------------------------------ */

typedef struct mbnn_network mbnn_network;

/* widths = {input, hidden_1, ..., hidden_L, output}, count >= 3. All hidden
 * nodes start active and all parameters start at zero. */
MBNN_API mbnn_status mbnn_network_create(const int* widths, size_t count, mbnn_network** out);
MBNN_API void mbnn_network_destroy(mbnn_network* net);

MBNN_API size_t mbnn_network_num_params(const mbnn_network* net);
MBNN_API size_t mbnn_network_num_hidden(const mbnn_network* net);

/* Flat parameter vector: per affine map, row-major weights then bias. */
MBNN_API mbnn_status mbnn_network_set_params(mbnn_network* net, const double* theta, size_t count);
MBNN_API mbnn_status mbnn_network_get_params(const mbnn_network* net, double* theta, size_t count);

/* One byte per hidden node (0 or 1), layer 0 first. */
MBNN_API mbnn_status mbnn_network_set_mask(mbnn_network* net, const uint8_t* bits, size_t count);
MBNN_API mbnn_status mbnn_network_active_counts(const mbnn_network* net, int* counts, size_t layers);

/* Row-major inputs (rows x input_dim) to row-major outputs (rows x output_dim),
 * clamped to [-truncation, truncation]; pass truncation <= 0 for raw outputs. */
MBNN_API mbnn_status mbnn_network_forward(const mbnn_network* net, const double* x, size_t rows,
                                          size_t cols, double truncation, double* out,
                                          size_t out_count);

/* ---- experiments ---------------------------------------------------------- */

typedef struct mbnn_experiment mbnn_experiment;

/* config_json may be NULL or "" for all defaults. */
MBNN_API mbnn_status mbnn_experiment_create(const char* config_json, mbnn_experiment** out);
/* Same, with the experiment kind ("fit", "ablation", "bsts") replacing the
 * configured one before validation. */
MBNN_API mbnn_status mbnn_experiment_create_as(const char* config_json, const char* kind,
                                               mbnn_experiment** out);
MBNN_API void mbnn_experiment_destroy(mbnn_experiment* exp);

/* "a.b.c=value"; the value is parsed as JSON when possible. Only the
 * assignment syntax is checked here, so several dependent keys can be changed
 * in sequence; mbnn_experiment_validate or mbnn_experiment_run checks the result. */
MBNN_API mbnn_status mbnn_experiment_override(mbnn_experiment* exp, const char* assignment);
MBNN_API mbnn_status mbnn_experiment_validate(const mbnn_experiment* exp);
MBNN_API mbnn_status mbnn_experiment_set_seed(mbnn_experiment* exp, uint64_t seed);

/* kind: "fit", "ablation", "bsts", or NULL for the configured experiment.
 * Writes the results bundle into out_dir. */
MBNN_API mbnn_status mbnn_experiment_run(mbnn_experiment* exp, const char* kind, const char* out_dir);

MBNN_API mbnn_status mbnn_experiment_resolved_config(const mbnn_experiment* exp, char* buf,
                                                     size_t cap, size_t* needed);
/* metrics.json document of the most recent successful run. */
MBNN_API mbnn_status mbnn_experiment_metrics(const mbnn_experiment* exp, char* buf, size_t cap,
                                             size_t* needed);

/* ---- utilities ------------------------------------------------------------- */

/* Writes train.csv and test.csv for the cubic regression benchmark. */
MBNN_API mbnn_status mbnn_generate_polynomial(size_t n_train, size_t n_test, uint64_t seed,
                                              const char* out_dir);

/* Recomputes metrics from an existing results bundle. */
MBNN_API mbnn_status mbnn_recompute_metrics(const char* run_dir, char* buf, size_t cap,
                                            size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
