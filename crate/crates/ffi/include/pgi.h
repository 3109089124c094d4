#ifndef PGI_H
#define PGI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum PgiStatus {
  PGI_STATUS_OK = 0,
  PGI_STATUS_NULL_POINTER = 1,
  PGI_STATUS_INVALID_ARGUMENT = 2,
  PGI_STATUS_PARSE = 3,
  PGI_STATUS_IO = 4,
  PGI_STATUS_DIMENSION_MISMATCH = 5,
  PGI_STATUS_PANIC = 6,
} PgiStatus;

/**
 * Parsed POMDP model.
 */
typedef struct PgiModel PgiModel;

/**
 * Layered policy graph.
 */
typedef struct PgiPolicy PgiPolicy;

/**
 * Solver settings. Obtain defaults from [`pgi_solve_options_default`].
 */
typedef struct PgiSolveOptions {
  size_t horizon;
  size_t width;
  size_t max_iterations;
  uint64_t seed;
  double value_epsilon;
  /**
   * Seconds; zero or negative means no limit.
   */
  double time_limit;
  bool compression;
  bool particle;
  size_t n_particles;
  /**
   * Zero means `n_particles`.
   */
  size_t n_samples;
  size_t eval_rollouts;
} PgiSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pgi_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void pgi_string_free(char *s);

/**
 * Parses a `.pomdp` document.
 *
 * # Safety
 * `text` must be a nul-terminated string; `out` must be writable.
 */
enum PgiStatus pgi_model_parse(const char *text, struct PgiModel **out);

/**
 * Loads a model file in `.pomdp` or native JSON form.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PgiStatus pgi_model_load(const char *path, struct PgiModel **out);

/**
 * # Safety
 * `model` must come from this library and not have been freed. Null is ignored.
 */
void pgi_model_free(struct PgiModel *model);

/**
 * # Safety
 * `model` must be a live handle; the out pointers must be writable.
 */
enum PgiStatus pgi_model_dims(const struct PgiModel *model,
                              size_t *num_states,
                              size_t *num_actions,
                              size_t *num_observations);

struct PgiSolveOptions pgi_solve_options_default(void);

/**
 * Runs exact or particle PGI. On success writes the policy handle and the
 * final value reported by the solver.
 *
 * # Safety
 * `model` and `options` must be valid; out pointers must be writable.
 */
enum PgiStatus pgi_solve(const struct PgiModel *model,
                         const struct PgiSolveOptions *options,
                         struct PgiPolicy **out_policy,
                         double *out_value);

/**
 * # Safety
 * `policy` must come from this library and not have been freed. Null is ignored.
 */
void pgi_policy_free(struct PgiPolicy *policy);

/**
 * # Safety
 * `policy` must be a live handle; out pointers must be writable.
 */
enum PgiStatus pgi_policy_dims(const struct PgiPolicy *policy, size_t *horizon, size_t *width);

/**
 * Action of node `node` in layer `layer`.
 *
 * # Safety
 * `policy` must be a live handle; `out` must be writable.
 */
enum PgiStatus pgi_policy_action(const struct PgiPolicy *policy,
                                 size_t layer,
                                 size_t node,
                                 size_t *out);

/**
 * Successor in layer `layer + 1` after observing `observation`. Fails on
 * the last layer.
 *
 * # Safety
 * `policy` must be a live handle; `out` must be writable.
 */
enum PgiStatus pgi_policy_successor(const struct PgiPolicy *policy,
                                    size_t layer,
                                    size_t node,
                                    size_t observation,
                                    size_t *out);

/**
 * Parses a native policy document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum PgiStatus pgi_policy_from_json(const char *json, struct PgiPolicy **out);

/**
 * Native policy document. Free the result with [`pgi_string_free`].
 *
 * # Safety
 * `policy` must be a live handle; `out` must be writable.
 */
enum PgiStatus pgi_policy_to_json(const struct PgiPolicy *policy, char **out);

/**
 * Graphviz DOT text. `model` may be null; when given, its names label the
 * graph. Free the result with [`pgi_string_free`].
 *
 * # Safety
 * `policy` must be a live handle, `model` null or live; `out` must be writable.
 */
enum PgiStatus pgi_policy_to_dot(const struct PgiPolicy *policy,
                                 const struct PgiModel *model,
                                 bool reachable_only,
                                 char **out);

/**
 * Exact expected total reward of `policy` from the model's initial belief.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum PgiStatus pgi_policy_exact_value(const struct PgiModel *model,
                                      const struct PgiPolicy *policy,
                                      double *out);

/**
 * Monte-Carlo estimate of the policy value from `rollouts` episodes.
 *
 * # Safety
 * Handles must be live; out pointers must be writable.
 */
enum PgiStatus pgi_policy_mc_value(const struct PgiModel *model,
                                   const struct PgiPolicy *policy,
                                   size_t rollouts,
                                   uint64_t seed,
                                   double *out_mean,
                                   double *out_stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PGI_H */
