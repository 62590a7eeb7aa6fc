#ifndef RISKLA_H
#define RISKLA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RisklaStatus {
  RISKLA_STATUS_OK = 0,
  RISKLA_STATUS_NULL_POINTER = 1,
  /**
   * An argument or config value is out of range.
   */
  RISKLA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A solve or simulation failed.
   */
  RISKLA_STATUS_RUNTIME = 3,
  RISKLA_STATUS_PANIC = 4,
} RisklaStatus;

/**
 * A loaded experiment: system, data and configured policies.
 */
typedef struct RisklaInstance RisklaInstance;

/**
 * One closed-loop episode.
 */
typedef struct RisklaTrace RisklaTrace;

/**
 * State and decision of one simulated step.
 */
typedef struct RisklaStep {
  double demand;
  double wind;
  double price;
  double battery_level;
  double hydrogen_level;
  double wind_to_load;
  double battery_to_load;
  double fuel_cell_to_load;
  double wind_to_battery;
  double fuel_cell_to_battery;
  double hydrogen_purchase;
  double wind_curtailed;
  double cost;
  double loss;
} RisklaStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *riskla_last_error(void);

/**
 * Value-at-risk at level `alpha` of `len` values.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to a writable double.
 */
enum RisklaStatus riskla_var(const double *values, size_t len, double alpha, double *out);

/**
 * Conditional value-at-risk at level `alpha` of `len` values.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to a writable double.
 */
enum RisklaStatus riskla_cvar(const double *values, size_t len, double alpha, double *out);

/**
 * Fraction of values strictly above `zeta`.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to a writable double.
 */
enum RisklaStatus riskla_poe(const double *values, size_t len, double zeta, double *out);

/**
 * Buffered probability of exceedance of `zeta`.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to a writable double.
 */
enum RisklaStatus riskla_bpoe(const double *values, size_t len, double zeta, double *out);

/**
 * Loads the TOML experiment at `path` into a new handle written to `out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum RisklaStatus riskla_instance_load(const char *path, struct RisklaInstance **out);

/**
 * Releases a handle from [`riskla_instance_load`]; null is ignored.
 *
 * # Safety
 * `handle` must be null or a live handle that is not used afterwards.
 */
void riskla_instance_free(struct RisklaInstance *handle);

/**
 * Number of steps `T` of an episode.
 *
 * # Safety
 * `handle` must be a live handle and `out` writable.
 */
enum RisklaStatus riskla_instance_episode_length(const struct RisklaInstance *handle, size_t *out);

/**
 * Number of policies listed in the config.
 *
 * # Safety
 * `handle` must be a live handle and `out` writable.
 */
enum RisklaStatus riskla_instance_policy_count(const struct RisklaInstance *handle, size_t *out);

/**
 * Writes the report name of policy `index` as a NUL-terminated string into
 * `buf` of `capacity` bytes. `required` receives the size including the NUL.
 *
 * # Safety
 * `handle` must be live, `buf` must hold `capacity` bytes (or be null when
 * `capacity` is 0), and `required` must be writable.
 */
enum RisklaStatus riskla_instance_policy_name(const struct RisklaInstance *handle,
                                              size_t index,
                                              char *buf,
                                              size_t capacity,
                                              size_t *required);

/**
 * Evaluates configured policy `index` on `scenarios` paired episodes from
 * `seed`. Per-episode costs go to `costs` when it is not null.
 *
 * # Safety
 * `handle` must be live, `costs` null or writable for `scenarios` doubles,
 * and `mean` writable.
 */
enum RisklaStatus riskla_evaluate_policy(const struct RisklaInstance *handle,
                                         size_t index,
                                         size_t scenarios,
                                         uint64_t seed,
                                         double *costs,
                                         double *mean);

/**
 * Like [`riskla_evaluate_policy`] for a constant-θ deterministic look-ahead.
 *
 * # Safety
 * Same as [`riskla_evaluate_policy`].
 */
enum RisklaStatus riskla_evaluate_dla(const struct RisklaInstance *handle,
                                      double theta,
                                      size_t scenarios,
                                      uint64_t seed,
                                      double *costs,
                                      double *mean);

/**
 * Runs configured policy `index` for one episode and returns its trace.
 *
 * # Safety
 * `handle` must be live and `out` writable.
 */
enum RisklaStatus riskla_simulate_policy(const struct RisklaInstance *handle,
                                         size_t index,
                                         uint64_t seed,
                                         struct RisklaTrace **out);

/**
 * Runs a constant-θ deterministic look-ahead for one episode.
 *
 * # Safety
 * `handle` must be live and `out` writable.
 */
enum RisklaStatus riskla_simulate_dla(const struct RisklaInstance *handle,
                                      double theta,
                                      uint64_t seed,
                                      struct RisklaTrace **out);

/**
 * Releases a trace; null is ignored.
 *
 * # Safety
 * `trace` must be null or a live trace that is not used afterwards.
 */
void riskla_trace_free(struct RisklaTrace *trace);

/**
 * Number of steps in the trace.
 *
 * # Safety
 * `trace` must be live and `out` writable.
 */
enum RisklaStatus riskla_trace_len(const struct RisklaTrace *trace, size_t *out);

/**
 * Total cost and total unserved load of the episode.
 *
 * # Safety
 * `trace` must be live; `cost` and `loss` writable.
 */
enum RisklaStatus riskla_trace_totals(const struct RisklaTrace *trace, double *cost, double *loss);

/**
 * Copies step `t` of the trace.
 *
 * # Safety
 * `trace` must be live and `out` writable.
 */
enum RisklaStatus riskla_trace_step(const struct RisklaTrace *trace,
                                    size_t t,
                                    struct RisklaStep *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKLA_H */
