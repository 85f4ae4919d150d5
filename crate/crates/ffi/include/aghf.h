#ifndef AGHF_H
#define AGHF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum AghfStatus {
  AGHF_STATUS_OK = 0,
  AGHF_STATUS_NULL_POINTER = 1,
  AGHF_STATUS_INVALID_UTF8 = 2,
  AGHF_STATUS_CONFIG = 3,
  AGHF_STATUS_SOLVE = 4,
  AGHF_STATUS_IO = 5,
  AGHF_STATUS_BUFFER_TOO_SMALL = 6,
  AGHF_STATUS_PANIC = 7,
} AghfStatus;

/**
 * Opaque validated problem.
 */
typedef struct AghfProblem AghfProblem;

/**
 * Opaque planning result.
 */
typedef struct AghfResult AghfResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *aghf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aghf_version(void);

/**
 * Parses and validates a JSON problem configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AghfStatus aghf_problem_from_json(const char *json, struct AghfProblem **out);

/**
 * Loads and validates a JSON problem configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AghfStatus aghf_problem_from_file(const char *path, struct AghfProblem **out);

/**
 * Number of state components of a problem.
 *
 * # Safety
 * `problem` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_problem_state_dim(const struct AghfProblem *problem, size_t *out);

/**
 * # Safety
 * `problem` must come from this library or be null; it must not be used
 * afterwards.
 */
void aghf_problem_free(struct AghfProblem *problem);

/**
 * Runs the full planning pipeline.
 *
 * # Safety
 * `problem` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_plan(const struct AghfProblem *problem, struct AghfResult **out);

/**
 * # Safety
 * `result` must come from this library or be null; it must not be used
 * afterwards.
 */
void aghf_result_free(struct AghfResult *result);

/**
 * Terminal time T.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_terminal_time(const struct AghfResult *result, double *out);

/**
 * Control energy E.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_energy(const struct AghfResult *result, double *out);

/**
 * Largest endpoint error over fixed end components.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_max_endpoint_error(const struct AghfResult *result, double *out);

/**
 * Flow time reached.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_s_final(const struct AghfResult *result, double *out);

/**
 * 1 if the flow reached its steady-state tolerance, else 0.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_converged(const struct AghfResult *result, int *out);

/**
 * Number of control samples.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_control_samples(const struct AghfResult *result, size_t *out);

/**
 * Number of samples of the integrated path.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_path_samples(const struct AghfResult *result, size_t *out);

/**
 * Number of inputs m.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_input_dim(const struct AghfResult *result, size_t *out);

/**
 * Number of states n.
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_state_dim(const struct AghfResult *result, size_t *out);

/**
 * Copies the control samples: `times[samples]` and row-major
 * `values[samples * m]`. `times` may be null.
 *
 * # Safety
 * `result` must come from this library; the buffers must hold `capacity`
 * times and `capacity * m` values.
 */
enum AghfStatus aghf_result_control(const struct AghfResult *result,
                                    double *times,
                                    double *values,
                                    size_t capacity);

/**
 * Copies the integrated path: `times[samples]` and row-major
 * `states[samples * n]`. `times` may be null.
 *
 * # Safety
 * `result` must come from this library; the buffers must hold `capacity`
 * times and `capacity * n` states.
 */
enum AghfStatus aghf_result_path(const struct AghfResult *result,
                                 double *times,
                                 double *states,
                                 size_t capacity);

/**
 * Summary as a JSON string; release it with [`aghf_string_free`].
 *
 * # Safety
 * `result` must come from this library; `out` must be valid.
 */
enum AghfStatus aghf_result_summary_json(const struct AghfResult *result, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void aghf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGHF_H */
