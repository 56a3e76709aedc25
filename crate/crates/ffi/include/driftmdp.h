#ifndef DRIFTMDP_H
#define DRIFTMDP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_ARGUMENT = 2,
  DM_STATUS_INVALID_MODEL = 3,
  DM_STATUS_DIAMETER_INFINITE = 4,
  DM_STATUS_ITERATION_CAP = 5,
  DM_STATUS_IO = 6,
  DM_STATUS_PARSE = 7,
  DM_STATUS_BUFFER_TOO_SMALL = 8,
  DM_STATUS_INTERNAL = 9,
  DM_STATUS_PANIC = 10,
} DmStatus;

/**
 * A non-stationary instance.
 */
typedef struct DmInstance DmInstance;

/**
 * A finished simulation with its regret curve.
 */
typedef struct DmRun DmRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to fit, into `buf`. Returns the full message length in bytes
 * without the terminator; pass a null `buf` to query it.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t dm_last_error_message(char *buf, size_t len);

/**
 * Stationary random instance with `states` states and `actions` actions each.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DmStatus dm_instance_generate_stationary(size_t states,
                                              size_t actions,
                                              size_t horizon,
                                              uint64_t seed,
                                              struct DmInstance **out);

/**
 * Drifting instance with the given reward and kernel variation budgets
 * spread evenly over time.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DmStatus dm_instance_generate_drift(size_t states,
                                         size_t actions,
                                         size_t horizon,
                                         double reward_budget,
                                         double kernel_budget,
                                         uint64_t seed,
                                         struct DmInstance **out);

/**
 * Loads an instance file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum DmStatus dm_instance_load(const char *path, struct DmInstance **out);

/**
 * # Safety
 * `inst` must be null or a handle from this library not yet freed.
 */
void dm_instance_free(struct DmInstance *inst);

/**
 * Horizon of the instance, or 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
size_t dm_instance_horizon(const struct DmInstance *inst);

/**
 * Realized reward and kernel variation budgets.
 *
 * # Safety
 * `inst` must be a live handle; the outputs must be valid for writes.
 */
enum DmStatus dm_instance_budgets(const struct DmInstance *inst, double *reward, double *kernel);

/**
 * Diameter of the snapshot at step `t` (1-based).
 *
 * # Safety
 * `inst` must be a live handle and `out` valid for writes.
 */
enum DmStatus dm_snapshot_diameter(const struct DmInstance *inst, size_t t, double *out);

/**
 * Optimal long-run average reward of the snapshot at step `t`.
 *
 * # Safety
 * `inst` must be a live handle and `out` valid for writes.
 */
enum DmStatus dm_snapshot_optimal_gain(const struct DmInstance *inst,
                                       size_t t,
                                       double eps,
                                       double *out);

/**
 * Runs the sliding-window learner with window `window` and widening `eta`
 * from state 0 under Bernoulli rewards.
 *
 * # Safety
 * `inst` must be a live handle and `out` valid for writes.
 */
enum DmStatus dm_run_swucrl(const struct DmInstance *inst,
                            size_t window,
                            double eta,
                            double delta,
                            uint64_t seed,
                            struct DmRun **out);

/**
 * Runs the bandit-tuned learner, which needs no budget knowledge.
 *
 * # Safety
 * `inst` must be a live handle and `out` valid for writes.
 */
enum DmStatus dm_run_borl(const struct DmInstance *inst,
                          double delta,
                          uint64_t seed,
                          struct DmRun **out);

/**
 * # Safety
 * `run` must be null or a handle from this library not yet freed.
 */
void dm_run_free(struct DmRun *run);

/**
 * Number of steps in the run, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t dm_run_len(const struct DmRun *run);

/**
 * Copies the cumulative regret curve into `buf`, which must hold
 * [`dm_run_len`] values.
 *
 * # Safety
 * `run` must be a live handle and `buf` valid for `len` writes.
 */
enum DmStatus dm_run_cum_regret(const struct DmRun *run, double *buf, size_t len);

/**
 * Replays the two-state switching construction with phase length `tau`.
 * Writes the four displayed empirical transition probabilities and the
 * empirical kernel's diameter.
 *
 * # Safety
 * `values` must be valid for 4 writes and `empirical_diameter` for one.
 */
enum DmStatus dm_prop3_replay(size_t tau, double *values, double *empirical_diameter);

/**
 * Extended value iteration over interval rewards and L1 kernel balls on a
 * uniform `states x actions` layout. Arrays are indexed by
 * `pair = s * actions + a`; `p_hat` holds `pair * states + next`.
 * Writes the optimistic policy (`states` entries), gain and bias
 * (`states` entries). `converged` is 0 when the iteration cap was hit.
 *
 * # Safety
 * Inputs must be valid for their stated lengths and outputs for writes.
 */
enum DmStatus dm_evi_solve(size_t states,
                           size_t actions,
                           const double *r_lo,
                           const double *r_hi,
                           const double *p_hat,
                           const double *beta,
                           double eps,
                           size_t max_iter,
                           size_t *policy,
                           double *gain,
                           double *bias,
                           int32_t *converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRIFTMDP_H */
