/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef IGABEM_H
#define IGABEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Experiment presets.
 */
typedef enum IgabemPreset {
  IGABEM_PRESET_HYPER_PACMAN = 0,
  IGABEM_PRESET_WEAK_PACMAN = 1,
  IGABEM_PRESET_HYPER_HEART = 2,
  IGABEM_PRESET_WEAK_HEART = 3,
} IgabemPreset;

/**
 * Status codes returned by every fallible function.
 */
typedef enum IgabemStatus {
  IGABEM_STATUS_OK = 0,
  IGABEM_STATUS_NULL_POINTER = 1,
  IGABEM_STATUS_INVALID_ARGUMENT = 2,
  IGABEM_STATUS_NUMERICAL = 3,
  IGABEM_STATUS_PANIC = 4,
} IgabemStatus;

/**
 * Configuration handle.
 */
typedef struct IgabemConfig IgabemConfig;

/**
 * Finished run handle.
 */
typedef struct IgabemRun IgabemRun;

/**
 * One step of a run.
 */
typedef struct IgabemStep {
  size_t ell;
  size_t knots;
  size_t dim;
  double eta;
  double res;
  double osc;
  double mu;
  size_t marked;
  size_t coarsened;
} IgabemStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a configuration for a preset with the default parameters
 * (`θ = 0.5`, `ϑ = 0.1`, `C_min = C_mark = 1`, `p = 2`, 1000 dofs).
 * Returns null on failure.
 */
struct IgabemConfig *igabem_config_new(enum IgabemPreset preset);

/**
 * Releases a configuration; null is ignored.
 *
 * # Safety
 * `cfg` must be null or a pointer from [`igabem_config_new`] not yet freed.
 */
void igabem_config_free(struct IgabemConfig *cfg);

/**
 * Sets the adaptivity parameters `θ`, `ϑ`, `C_min`, `C_mark`.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum IgabemStatus igabem_config_set_marking(struct IgabemConfig *cfg,
                                            double theta,
                                            double vartheta,
                                            double c_min,
                                            double c_mark);

/**
 * Sets the polynomial degree.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum IgabemStatus igabem_config_set_degree(struct IgabemConfig *cfg, size_t degree);

/**
 * Sets the dimension bound of the run.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum IgabemStatus igabem_config_set_max_dof(struct IgabemConfig *cfg, size_t max_dof);

/**
 * Switches between adaptive (0) and uniform (nonzero) refinement.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum IgabemStatus igabem_config_set_uniform(struct IgabemConfig *cfg, int uniform);

/**
 * Selects the indirect (nonzero) or direct (0) formulation.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum IgabemStatus igabem_config_set_indirect(struct IgabemConfig *cfg, int indirect);

/**
 * Runs the experiment; on success `*out` receives a run handle.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
enum IgabemStatus igabem_run(const struct IgabemConfig *cfg, struct IgabemRun **out);

/**
 * Releases a run; null is ignored.
 *
 * # Safety
 * `run` must be null or a handle from [`igabem_run`] not yet freed.
 */
void igabem_run_free(struct IgabemRun *run);

/**
 * Number of steps in a run (0 for null).
 *
 * # Safety
 * `run` must be null or a live run handle.
 */
size_t igabem_run_len(const struct IgabemRun *run);

/**
 * Copies step `index` into `*out`.
 *
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum IgabemStatus igabem_run_step(const struct IgabemRun *run,
                                  size_t index,
                                  struct IgabemStep *out);

/**
 * Least-squares slope of `log η` over `log #knots` for the last `window`
 * steps.
 *
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum IgabemStatus igabem_run_rate(const struct IgabemRun *run, size_t window, double *out);

/**
 * Writes the `t multiplicity` knot listing of step `index` as a
 * NUL-terminated string into `buf` (capacity `len`). `*needed` receives
 * the required capacity including the terminator; a short buffer yields
 * `InvalidArgument` and leaves `buf` untouched.
 *
 * # Safety
 * `run` must be a live run handle, `needed` valid, and `buf` valid for
 * `len` bytes (or null with `len == 0`).
 */
enum IgabemStatus igabem_run_histogram(const struct IgabemRun *run,
                                       size_t index,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into the library on the same thread.
 */
const char *igabem_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *igabem_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IGABEM_H */
