#ifndef SIMEST_H
#define SIMEST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SimestStatus {
  SIMEST_STATUS_OK = 0,
  SIMEST_STATUS_NULL_POINTER = 1,
  SIMEST_STATUS_INVALID_ARGUMENT = 2,
  SIMEST_STATUS_CONFIG = 3,
  SIMEST_STATUS_NO_CONVERGENCE = 4,
  SIMEST_STATUS_TOO_MANY_FAILURES = 5,
  SIMEST_STATUS_NUMERICAL = 6,
  SIMEST_STATUS_IO = 7,
  SIMEST_STATUS_OUT_OF_RANGE = 8,
  SIMEST_STATUS_PANIC = 9,
} SimestStatus;

/**
 * Weighted posterior draws.
 */
typedef struct SimestDraws SimestDraws;

/**
 * Parsed experiment configuration.
 */
typedef struct SimestExperiment SimestExperiment;

/**
 * Result of a replication experiment.
 */
typedef struct SimestTable SimestTable;

/**
 * Summary statistics of one (estimator, parameter) pair.
 */
typedef struct SimestRow {
  double truth;
  double mean;
  double sd;
  double bias;
  double mc_se;
  size_t failures;
} SimestRow;

/**
 * Closed-form moments of a normal-model estimator of `sigma2`.
 */
typedef struct SimestOracleRow {
  double expected;
  double bias;
  double variance;
  /**
   * Value given `sigma2_hat`; NaN where the estimator is random.
   */
  double conditional;
} SimestOracleRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *simest_last_error(void);

/**
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SimestStatus simest_experiment_from_toml(const char *toml, struct SimestExperiment **out);

/**
 * Overrides the master seed.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum SimestStatus simest_experiment_set_seed(struct SimestExperiment *exp, uint64_t master_seed);

/**
 * # Safety
 * `exp` must be null or a handle not yet freed.
 */
void simest_experiment_free(struct SimestExperiment *exp);

/**
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum SimestStatus simest_run_replications(const struct SimestExperiment *exp,
                                          struct SimestTable **out);

/**
 * # Safety
 * `table` must be null or a handle not yet freed.
 */
void simest_table_free(struct SimestTable *table);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t simest_table_len(const struct SimestTable *table);

/**
 * # Safety
 * `table` must be a live handle; `estimator` and `param` NUL-terminated;
 * `out` a valid pointer.
 */
enum SimestStatus simest_table_find(const struct SimestTable *table,
                                    const char *estimator,
                                    const char *param,
                                    struct SimestRow *out);

/**
 * Writes the table as CSV with the configuration in a comment header.
 *
 * # Safety
 * `table` must be a live handle and `path` NUL-terminated.
 */
enum SimestStatus simest_table_write_csv(const struct SimestTable *table, const char *path);

/**
 * Reverse sampler for the normal model on the observed sample `data`,
 * under the prior `sigma2^(-alpha)`.
 *
 * # Safety
 * `data` must point to `len` doubles and `out` be a valid pointer.
 */
enum SimestStatus simest_normal_reverse_sampler(const double *data,
                                                size_t len,
                                                double alpha,
                                                size_t b,
                                                uint64_t seed,
                                                struct SimestDraws **out);

/**
 * # Safety
 * `draws` must be null or a live handle.
 */
size_t simest_draws_len(const struct SimestDraws *draws);

/**
 * # Safety
 * `draws` must be null or a live handle.
 */
size_t simest_draws_dim(const struct SimestDraws *draws);

/**
 * Kish effective sample size, or NaN for a null handle.
 *
 * # Safety
 * `draws` must be null or a live handle.
 */
double simest_draws_effective_size(const struct SimestDraws *draws);

/**
 * Copies draw `index` into `theta` (`dim` doubles) and its normalized
 * weight into `weight`.
 *
 * # Safety
 * `draws` must be a live handle, `theta` must point to `dim` writable
 * doubles and `weight` be a valid pointer.
 */
enum SimestStatus simest_draws_get(const struct SimestDraws *draws,
                                   size_t index,
                                   double *theta,
                                   size_t dim,
                                   double *weight);

/**
 * Weighted mean of the draws into `out` (`dim` doubles).
 *
 * # Safety
 * `draws` must be a live handle and `out` point to `dim` writable doubles.
 */
enum SimestStatus simest_draws_mean(const struct SimestDraws *draws, double *out, size_t dim);

/**
 * # Safety
 * `draws` must be null or a handle not yet freed.
 */
void simest_draws_free(struct SimestDraws *draws);

/**
 * `estimator` is one of ml, md, bc_flat, bc_reducing, rs_flat,
 * rs_reducing, smd, lt_flat, slt_flat, bootstrap.
 *
 * # Safety
 * `estimator` must be NUL-terminated and `out` a valid pointer.
 */
enum SimestStatus simest_oracle_table2(const char *estimator,
                                       size_t t,
                                       size_t s,
                                       size_t b,
                                       double sigma2,
                                       double sigma2_hat,
                                       struct SimestOracleRow *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIMEST_H */
