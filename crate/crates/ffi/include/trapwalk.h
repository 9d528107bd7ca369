#ifndef TRAPWALK_H
#define TRAPWALK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Return codes.
 */
typedef enum TwStatus {
  TW_STATUS_OK = 0,
  TW_STATUS_NULL_POINTER = 1,
  TW_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A step budget, size cap or table range was exceeded.
   */
  TW_STATUS_RUNTIME = 3,
  TW_STATUS_PANIC = 4,
} TwStatus;

/**
 * Opaque offspring law of the Galton-Watson tree.
 */
typedef struct TwOffspringLaw TwOffspringLaw;

/**
 * Opaque tail function `F̄` of the trap depths.
 */
typedef struct TwTail TwTail;

/**
 * A right-continuous step path on `[0, horizon]`: value `initial` until
 * `times[0]`, then `values[k]` from `times[k]` on.
 */
typedef struct TwStep {
  double initial;
  const double *times;
  const double *values;
  size_t len;
  double horizon;
} TwStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *tw_last_error(void);

/**
 * `F̄(u) = (ln u)^{−γ}` for `u ≥ e`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TwStatus tw_tail_log_power(double gamma, struct TwTail **out);

/**
 * `F̄(u) = (ln ln u)^{−γ}` for `u ≥ e^e`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TwStatus tw_tail_iter_log(double gamma, struct TwTail **out);

/**
 * Tabulated tail from `len` rows of `(ln u, F̄(u))`.
 *
 * # Safety
 * `log_u` and `tail` must be null or point to `len` doubles; `out` must be
 * null or valid for writes.
 */
enum TwStatus tw_tail_table(const double *log_u,
                            const double *tail,
                            size_t len,
                            struct TwTail **out);

/**
 * # Safety
 * `tail` must be null or a handle from a `tw_tail_*` constructor, freed once.
 */
void tw_tail_free(struct TwTail *tail);

/**
 * `F̄(e^{log_u})`.
 *
 * # Safety
 * `tail` must be a live handle or null; `out` null or valid for writes.
 */
enum TwStatus tw_tail_eval_log(const struct TwTail *tail, double log_u, double *out);

/**
 * `ln F̄⁻¹(p)` for `0 < p ≤ 1`.
 *
 * # Safety
 * `tail` must be a live handle or null; `out` null or valid for writes.
 */
enum TwStatus tw_tail_inverse_log(const struct TwTail *tail, double p, double *out);

/**
 * `ln F̄⁻¹(ln n / n)`, the deep-trap level at scale `n ≥ 2`.
 *
 * # Safety
 * `tail` must be a live handle or null; `out` null or valid for writes.
 */
enum TwStatus tw_tail_critical_depth_log(const struct TwTail *tail, double n, double *out);

/**
 * Critical geometric law `p_k = 2^{−k−1}`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TwStatus tw_offspring_geometric(struct TwOffspringLaw **out);

/**
 * Critical Zipf-type law with tail index `1 < alpha < 2`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TwStatus tw_offspring_zipf(double alpha, size_t table_len, struct TwOffspringLaw **out);

/**
 * # Safety
 * `law` must be null or a handle from a `tw_offspring_*` constructor, freed once.
 */
void tw_offspring_free(struct TwOffspringLaw *law);

/**
 * Survival probability `q_n = P(Z_n > 0)`.
 *
 * # Safety
 * `law` must be a live handle or null; `out` null or valid for writes.
 */
enum TwStatus tw_offspring_survival(const struct TwOffspringLaw *law, uint64_t n, double *out);

/**
 * Probability generating function `f(s)` on `[0, 1]`.
 *
 * # Safety
 * `law` must be a live handle or null; `out` null or valid for writes.
 */
enum TwStatus tw_offspring_pgf(const struct TwOffspringLaw *law, double s, double *out);

/**
 * `P(m(t) ≤ x) = e^{−t/x}` for the extremal process.
 */
double tw_marginal_cdf(double t, double x);

/**
 * Seed of replica `index` on stream `tag` under master seed `master`.
 */
uint64_t tw_derive_seed(uint64_t master, uint64_t index, uint64_t tag);

/**
 * Skorohod J1 distance between two step paths with the same horizon.
 *
 * # Safety
 * `f` and `g` must be null or point to valid `TwStep`s whose arrays hold
 * `len` doubles; `out` null or valid for writes.
 */
enum TwStatus tw_j1_distance(const struct TwStep *f, const struct TwStep *g, double *out);

/**
 * Skorohod M1 distance, graphs discretized with `resolution` points per jump.
 *
 * # Safety
 * As for `tw_j1_distance`.
 */
enum TwStatus tw_m1_distance(const struct TwStep *f,
                             const struct TwStep *g,
                             size_t resolution,
                             double *out);

/**
 * One replica of `(1/n) L(Δ_n)` for the directed trap model, seeded as
 * replica `replica` of `trapwalk trap-hitting --seed seed --grid 1`.
 *
 * # Safety
 * `tail` must be a live handle or null; `out` null or valid for writes.
 */
enum TwStatus tw_trap_hitting_sample(const struct TwTail *tail,
                                     double beta,
                                     uint64_t n,
                                     uint64_t seed,
                                     uint64_t replica,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAPWALK_H */
