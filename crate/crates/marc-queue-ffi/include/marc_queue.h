#ifndef MARC_QUEUE_H
#define MARC_QUEUE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MqStatus {
  MQ_STATUS_OK = 0,
  MQ_STATUS_INVALID_ARGUMENT = 1,
  MQ_STATUS_PARSE_ERROR = 2,
  MQ_STATUS_VALIDATION_ERROR = 3,
  MQ_STATUS_CAP_EXCEEDED = 4,
  MQ_STATUS_NUMERIC_ERROR = 5,
  MQ_STATUS_UNSTABLE = 6,
  MQ_STATUS_DOMAIN_ERROR = 7,
  MQ_STATUS_IO_ERROR = 8,
  MQ_STATUS_PANIC = 9,
} MqStatus;

/**
 * Opaque labeled-chain handle.
 */
typedef struct MqChain MqChain;

/**
 * Opaque solution handle.
 */
typedef struct MqSolution MqSolution;

/**
 * Opaque workload handle.
 */
typedef struct MqWorkload MqWorkload;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len` bytes). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len == 0`.
 */
uintptr_t mq_last_error_message(char *buf, uintptr_t len);

/**
 * Parse and validate a workload from a JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum MqStatus mq_workload_from_json(const char *json, struct MqWorkload **out);

/**
 * # Safety
 * `w` must be a handle from `mq_workload_from_json` (or null).
 */
void mq_workload_free(struct MqWorkload *w);

/**
 * Build the simplified saturated chain of a workload.
 *
 * # Safety
 * `w` must be a live workload handle; `out` must be a valid pointer.
 */
enum MqStatus mq_build_sss_chain(const struct MqWorkload *w, uintptr_t cap, struct MqChain **out);

/**
 * Build the full saturated chain of a workload.
 *
 * # Safety
 * `w` must be a live workload handle; `out` must be a valid pointer.
 */
enum MqStatus mq_build_saturated_chain(const struct MqWorkload *w,
                                       uintptr_t cap,
                                       struct MqChain **out);

/**
 * # Safety
 * `c` must be a handle from a chain builder (or null).
 */
void mq_chain_free(struct MqChain *c);

/**
 * Number of states in a chain.
 *
 * # Safety
 * `c` must be a live chain handle.
 */
uintptr_t mq_chain_num_states(const struct MqChain *c);

/**
 * Solve all MARC quantities of a chain.
 *
 * # Safety
 * `c` must be a live chain handle; `out` must be a valid pointer.
 */
enum MqStatus mq_analyze(const struct MqChain *c, struct MqSolution **out);

/**
 * Closed-form solution of the two-server two-class exponential family.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MqStatus mq_closed_form_k2(double p1, double mu1, double mu2, struct MqSolution **out);

/**
 * # Safety
 * `s` must be a handle from `mq_analyze`/`mq_closed_form_k2` (or null).
 */
void mq_solution_free(struct MqSolution *s);

/**
 * # Safety
 * `s` must be a live solution handle.
 */
uintptr_t mq_solution_num_states(const struct MqSolution *s);

/**
 * Stability threshold lambda*.
 *
 * # Safety
 * `s` must be a live solution handle.
 */
double mq_solution_lambda_star(const struct MqSolution *s);

/**
 * Scalar relative completions delta(Y_d, Y).
 *
 * # Safety
 * `s` must be a live solution handle.
 */
double mq_solution_delta_yd(const struct MqSolution *s);

/**
 * Copy the stationary distribution into `buf` (state enumeration order).
 *
 * # Safety
 * `s` must be live; `buf` must hold at least `mq_solution_num_states` f64s.
 */
enum MqStatus mq_solution_stationary(const struct MqSolution *s, double *buf, uintptr_t len);

/**
 * Copy the departure distribution Y_d into `buf`.
 *
 * # Safety
 * As for `mq_solution_stationary`.
 */
enum MqStatus mq_solution_departure(const struct MqSolution *s, double *buf, uintptr_t len);

/**
 * Copy the per-state relative completions delta into `buf`.
 *
 * # Safety
 * As for `mq_solution_stationary`.
 */
enum MqStatus mq_solution_delta(const struct MqSolution *s, double *buf, uintptr_t len);

/**
 * Max absolute residual of the drift identity on the chain/solution pair.
 *
 * # Safety
 * `c` and `s` must be live handles for the same chain.
 */
double mq_generator_residual(const struct MqChain *c, const struct MqSolution *s);

/**
 * Dominant-term prediction at arrival rate `lambda`: mean response time and
 * mean queue length are written to `out_t` and `out_q`.
 *
 * # Safety
 * `out_t` and `out_q` must be valid pointers.
 */
enum MqStatus mq_predict(double lambda_star,
                         double delta_yd,
                         double lambda,
                         double *out_t,
                         double *out_q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARC_QUEUE_H */
