#ifndef BUBBLEDYN_H
#define BUBBLEDYN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BdStatus {
  BD_STATUS_OK = 0,
  BD_STATUS_NULL_POINTER = 1,
  BD_STATUS_INVALID_UTF8 = 2,
  BD_STATUS_PARSE = 3,
  BD_STATUS_VALIDATION = 4,
  BD_STATUS_CONSTRAINT = 5,
  BD_STATUS_SOLVER = 6,
  BD_STATUS_IO = 7,
  BD_STATUS_OUT_OF_RANGE = 8,
  BD_STATUS_BUFFER_TOO_SMALL = 9,
  BD_STATUS_PANIC = 10,
} BdStatus;

typedef enum BdTermination {
  BD_TERMINATION_COMPLETED = 0,
  BD_TERMINATION_COLLISION = 1,
  BD_TERMINATION_DEGENERATE_SHAPE = 2,
  BD_TERMINATION_SOLVER_FAILURE = 3,
} BdTermination;

/**
 * A validated scenario ready to integrate.
 */
typedef struct BdScenario BdScenario;

/**
 * The samples of a finished integration.
 */
typedef struct BdTrajectory BdTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *bd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bd_version(void);

/**
 * Parses a scenario document. Relative mesh paths resolve against the
 * current directory.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BdStatus bd_scenario_from_json(const char *json, struct BdScenario **out);

/**
 * Reads and parses a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BdStatus bd_scenario_from_file(const char *path, struct BdScenario **out);

/**
 * # Safety
 * `scenario` must be NULL or a handle from `bd_scenario_from_*` that has not
 * been freed.
 */
void bd_scenario_free(struct BdScenario *scenario);

/**
 * Number of bubbles and total number of shape coordinates.
 *
 * # Safety
 * `scenario` must be a live handle; the outputs may be NULL.
 */
enum BdStatus bd_scenario_dimensions(const struct BdScenario *scenario,
                                     size_t *bubbles,
                                     size_t *coordinates);

/**
 * Overrides the mesh level used by `bd_integrate` and `bd_scenario_added_mass`.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum BdStatus bd_scenario_set_mesh_level(struct BdScenario *scenario, size_t level);

/**
 * Writes the added-mass matrix of the initial configuration, row-major,
 * into `out` (`len` doubles, at least the square of the coordinate count).
 *
 * # Safety
 * `scenario` must be a live handle and `out` must hold `len` doubles.
 */
enum BdStatus bd_scenario_added_mass(const struct BdScenario *scenario, double *out, size_t len);

/**
 * Integrates the scenario. Early stops (collision, degenerate shape, solver
 * failure) still produce a trajectory; see `bd_trajectory_termination`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum BdStatus bd_integrate(const struct BdScenario *scenario, struct BdTrajectory **out);

/**
 * # Safety
 * `trajectory` must be NULL or a handle from `bd_integrate` that has not
 * been freed.
 */
void bd_trajectory_free(struct BdTrajectory *trajectory);

/**
 * Number of samples and of coordinates per sample.
 *
 * # Safety
 * `trajectory` must be a live handle; the outputs may be NULL.
 */
enum BdStatus bd_trajectory_dimensions(const struct BdTrajectory *trajectory,
                                       size_t *samples,
                                       size_t *coordinates);

/**
 * # Safety
 * `trajectory` must be a live handle and `out` a valid pointer.
 */
enum BdStatus bd_trajectory_termination(const struct BdTrajectory *trajectory,
                                        enum BdTermination *out);

/**
 * One sample: its time, coordinates and velocities (each `len` doubles,
 * at least the coordinate count; either may be NULL), and energies.
 *
 * # Safety
 * `trajectory` must be a live handle; non-NULL buffers must hold `len`
 * doubles and non-NULL scalars must be writable.
 */
enum BdStatus bd_trajectory_sample(const struct BdTrajectory *trajectory,
                                   size_t index,
                                   double *time,
                                   double *coords,
                                   double *velocity,
                                   size_t len,
                                   double *kinetic,
                                   double *potential);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BUBBLEDYN_H */
