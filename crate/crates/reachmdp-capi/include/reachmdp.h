#ifndef REACHMDP_H
#define REACHMDP_H

/* Generated from the Rust sources by cbindgen; edit those instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define RMDP_OK 0

/**
 * Invalid request: bad argument values, missing initial condition, I/O.
 */
#define RMDP_ERR_USAGE 1

/**
 * The input text is not well formed.
 */
#define RMDP_ERR_PARSE 2

/**
 * The input parsed but violates a model or file invariant.
 */
#define RMDP_ERR_VALIDATION 3

/**
 * A configured work or memory budget was exceeded.
 */
#define RMDP_ERR_CAPACITY 4

/**
 * A restricted solve reached a state outside the solved set.
 */
#define RMDP_ERR_CLOSURE 5

/**
 * A required pointer argument was null.
 */
#define RMDP_ERR_NULL -1

/**
 * An input string was not valid UTF-8.
 */
#define RMDP_ERR_UTF8 -2

/**
 * An internal invariant failed; the handle state is unspecified.
 */
#define RMDP_ERR_PANIC -3

/**
 * Opaque factored MDP handle.
 */
typedef struct RmdpModel RmdpModel;

/**
 * Opaque reachability-analysis result handle.
 */
typedef struct RmdpReachable RmdpReachable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; never free it.
 */
const char *rmdp_last_error(void);

/**
 * Release a string returned by this API. Null is a no-op.
 */
void rmdp_string_free(char *s);

/**
 * Parse and validate a model from its textual form.
 */
int32_t rmdp_model_parse(const char *text, RmdpModel **out);

/**
 * Release a model handle. Null is a no-op.
 */
void rmdp_model_free(RmdpModel *model);

/**
 * Canonical textual form of the model; null only on allocation failure.
 */
char *rmdp_model_serialize(const RmdpModel *model);

size_t rmdp_model_variable_count(const RmdpModel *model);

size_t rmdp_model_action_count(const RmdpModel *model);

/**
 * Total number of joint states, as a decimal string (the count can
 * overflow any fixed-width integer).
 */
char *rmdp_model_state_count(const RmdpModel *model);

/**
 * Run the reachability analysis at arity bound `k`. Pass 0 for
 * `max_compound` or `max_candidates` to use the defaults.
 */
int32_t rmdp_analyze(const RmdpModel *model,
                     size_t k,
                     size_t max_compound,
                     uint64_t max_candidates,
                     RmdpReachable **out);

/**
 * Release an analysis handle. Null is a no-op.
 */
void rmdp_reachable_free(RmdpReachable *rs);

size_t rmdp_reachable_k(const RmdpReachable *rs);

size_t rmdp_reachable_iterations(const RmdpReachable *rs);

size_t rmdp_reachable_value_count(const RmdpReachable *rs);

size_t rmdp_reachable_constraint_count(const RmdpReachable *rs);

/**
 * Textual form of an analysis result, resolving ids against `model`.
 */
char *rmdp_reachable_serialize(const RmdpModel *model, const RmdpReachable *rs);

/**
 * Parse an analysis result, resolving names against `model`.
 */
int32_t rmdp_reachable_parse(const char *text, const RmdpModel *model, RmdpReachable **out);

/**
 * Count the states consistent with an analysis, as a decimal string.
 */
int32_t rmdp_count_consistent(const RmdpModel *model, const RmdpReachable *rs, char **out);

/**
 * Prune a model against an analysis result; on success the new model is
 * an independent handle.
 */
int32_t rmdp_reduce(const RmdpModel *model, const RmdpReachable *rs, RmdpModel **out);

/**
 * Enumerate states (restricted by `rs` when non-null), run value
 * iteration to `tol`, and return the solution dump.
 */
int32_t rmdp_solve(const RmdpModel *model, const RmdpReachable *rs, double tol, char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* REACHMDP_H */
