/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef WPSD_H
#define WPSD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; 0 to 3 coincide with the `wpsd` exit codes.
 */
typedef enum WpsdStatus {
  WPSD_STATUS_OK = 0,
  WPSD_STATUS_VIOLATED = 1,
  WPSD_STATUS_UNDETERMINED = 2,
  WPSD_STATUS_INPUT_ERROR = 3,
  WPSD_STATUS_NULL_POINTER = 4,
  WPSD_STATUS_INVALID_UTF8 = 5,
  WPSD_STATUS_PANIC = 6,
} WpsdStatus;

/**
 * Opaque Kolmogorov decomposition handle.
 */
typedef struct WpsdDecomposition WpsdDecomposition;

/**
 * Opaque kernel handle.
 */
typedef struct WpsdKernel WpsdKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. Valid until
 * the next call into this library on the same thread.
 */
const char *wpsd_last_error_message(void);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void wpsd_string_free(char *s);

/**
 * Runs a problem file given as JSON text. `command` is one of `validate`,
 * `check-positivity`, `decompose`, `represent`, `bounds`, `lift`, `factorize`,
 * `all`. On statuses 0 to 2 `*out_report` receives the report JSON; on
 * `WPSD_STATUS_INPUT_ERROR` nothing is written.
 *
 * # Safety
 * `problem_json` and `command` must be NUL-terminated; `out_report` must be writable.
 */
enum WpsdStatus wpsd_run_problem(const char *problem_json,
                                 const char *command,
                                 bool with_timestamp,
                                 char **out_report);

/**
 * Parses a kernel from JSON (`{"space": ..., "table": [[...]]}`).
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum WpsdStatus wpsd_kernel_from_json(const char *json, struct WpsdKernel **out);

/**
 * Releases a kernel. Null is a no-op.
 *
 * # Safety
 * `k` must come from [`wpsd_kernel_from_json`] and not have been freed.
 */
void wpsd_kernel_free(struct WpsdKernel *k);

/**
 * Number of points, or 0 for null.
 *
 * # Safety
 * `k` must be null or a live handle.
 */
uintptr_t wpsd_kernel_points(const struct WpsdKernel *k);

/**
 * Matrix size `d` of the values, or 0 for null.
 *
 * # Safety
 * `k` must be null or a live handle.
 */
uintptr_t wpsd_kernel_value_dim(const struct WpsdKernel *k);

/**
 * Weak positivity verdict: `WPSD_STATUS_OK` if certified positive,
 * `WPSD_STATUS_VIOLATED` with a witness, `WPSD_STATUS_UNDETERMINED` otherwise.
 * If `out_json` is not null it receives the verdict and the strong positivity
 * check as JSON.
 *
 * # Safety
 * `k` must be a live handle; `out_json` null or writable.
 */
enum WpsdStatus wpsd_kernel_check_positivity(const struct WpsdKernel *k,
                                             uintptr_t restarts,
                                             uint64_t seed,
                                             char **out_json);

/**
 * Minimal Kolmogorov decomposition with default tolerances.
 *
 * # Safety
 * `k` must be a live handle; `out` must be writable.
 */
enum WpsdStatus wpsd_decompose(const struct WpsdKernel *k, struct WpsdDecomposition **out);

/**
 * Releases a decomposition. Null is a no-op.
 *
 * # Safety
 * `d` must come from [`wpsd_decompose`] and not have been freed.
 */
void wpsd_decomposition_free(struct WpsdDecomposition *d);

/**
 * Dimension `n` of the decomposition space, or 0 for null.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
uintptr_t wpsd_decomposition_dim(const struct WpsdDecomposition *d);

/**
 * Largest entrywise defect of `[V(x), V(y)] - k(x, y)`.
 *
 * # Safety
 * `d` and `k` must be live handles; `out_defect` must be writable.
 */
enum WpsdStatus wpsd_decomposition_defect(const struct WpsdDecomposition *d,
                                          const struct WpsdKernel *k,
                                          double *out_defect);

/**
 * The decomposition (gram, pivots, `V`) as JSON.
 *
 * # Safety
 * `d` must be a live handle; `out_json` must be writable.
 */
enum WpsdStatus wpsd_decomposition_to_json(const struct WpsdDecomposition *d, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WPSD_H */
