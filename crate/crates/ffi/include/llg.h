#ifndef LLG_H
#define LLG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The first four match the exit codes of the `llg` CLI.
 */
typedef enum LlgStatus {
  LLG_STATUS_OK = 0,
  LLG_STATUS_CONFIG_ERROR = 1,
  LLG_STATUS_BLOW_UP = 2,
  LLG_STATUS_OPTIMIZER_FAILURE = 3,
  LLG_STATUS_NULL_POINTER = 4,
  LLG_STATUS_INVALID_ARGUMENT = 5,
  LLG_STATUS_INTERNAL = 6,
} LlgStatus;

typedef enum LlgScheme {
  LLG_SCHEME_ITO = 0,
  LLG_SCHEME_HEUN = 1,
} LlgScheme;

/**
 * Opaque run configuration.
 */
typedef struct LlgConfig LlgConfig;

/**
 * Opaque Monte-Carlo cost estimate.
 */
typedef struct LlgCostReport LlgCostReport;

/**
 * Opaque simulated trajectory.
 */
typedef struct LlgTrajectory LlgTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *llg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *llg_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library, freed once.
 */
void llg_string_free(char *s);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LlgStatus llg_config_new(struct LlgConfig **out);

/**
 * Parses and validates a JSON configuration; omitted fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LlgStatus llg_config_from_json(const char *json, struct LlgConfig **out);

/**
 * Serialises the configuration; release the result with [`llg_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum LlgStatus llg_config_to_json(const struct LlgConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum LlgStatus llg_config_set_seed(struct LlgConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum LlgStatus llg_config_set_scheme(struct LlgConfig *cfg, enum LlgScheme scheme);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum LlgStatus llg_config_set_paths(struct LlgConfig *cfg, size_t n_paths);

/**
 * Releases a configuration. NULL is ignored.
 *
 * # Safety
 * `cfg` must be NULL or a handle from this library, freed once.
 */
void llg_config_free(struct LlgConfig *cfg);

/**
 * Integrates path 0 of the configured ensemble, applying the configured
 * control if any.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum LlgStatus llg_simulate(const struct LlgConfig *cfg, struct LlgTrajectory **out);

/**
 * Number of stored time points; 0 for NULL.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t llg_trajectory_len(const struct LlgTrajectory *traj);

/**
 * Grid nodes `M + 1`; each field snapshot holds `3 (M + 1)` doubles.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t llg_trajectory_nodes(const struct LlgTrajectory *traj);

/**
 * Time and grid values of snapshot `index`, node-major `x, y, z` triples.
 *
 * # Safety
 * `traj` must be a live handle, `t` writable, and `values` point to `len`
 * writable doubles.
 */
enum LlgStatus llg_trajectory_snapshot(const struct LlgTrajectory *traj,
                                       size_t index,
                                       double *t,
                                       double *values,
                                       size_t len);

/**
 * Trajectory CSV as written by `llg simulate`; release with [`llg_string_free`].
 *
 * # Safety
 * `traj` must be a live handle; `out` must be writable.
 */
enum LlgStatus llg_trajectory_to_csv(const struct LlgTrajectory *traj, char **out);

/**
 * # Safety
 * `traj` must be NULL or a handle from this library, freed once.
 */
void llg_trajectory_free(struct LlgTrajectory *traj);

/**
 * Monte-Carlo cost of the configured control (zero control when none is set)
 * over `n_paths` paths of the configured master seed.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum LlgStatus llg_cost_evaluate(const struct LlgConfig *cfg,
                                 size_t n_paths,
                                 struct LlgCostReport **out);

/**
 * `J`; NaN for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
double llg_cost_total(const struct LlgCostReport *report);

/**
 * Per-term breakdown: tracking, control effort, terminal, standard error.
 *
 * # Safety
 * `report` must be a live handle; each output pointer must be NULL or writable.
 */
enum LlgStatus llg_cost_terms(const struct LlgCostReport *report,
                              double *tracking,
                              double *control,
                              double *terminal,
                              double *std_error);

/**
 * Paths excluded from the estimate because they blew up; 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
size_t llg_cost_failed_paths(const struct LlgCostReport *report);

/**
 * # Safety
 * `report` must be NULL or a handle from this library, freed once.
 */
void llg_cost_free(struct LlgCostReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLG_H */
