#ifndef MOTION_PLANNER_H
#define MOTION_PLANNER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Driving mode of a logged tick.
 */
typedef enum MpMode {
  MP_MODE_LTM = 0,
  MP_MODE_LANE_CHANGE = 1,
  MP_MODE_EMERGENCY = 2,
} MpMode;

/**
 * Result code of every call.
 */
typedef enum MpStatus {
  MP_STATUS_OK = 0,
  MP_STATUS_NULL_POINTER = 1,
  MP_STATUS_INVALID_UTF8 = 2,
  MP_STATUS_INVALID_SCENARIO = 3,
  MP_STATUS_INVALID_ARGUMENT = 4,
  MP_STATUS_SIMULATION_ERROR = 5,
  MP_STATUS_IO_ERROR = 6,
  MP_STATUS_BUFFER_TOO_SMALL = 7,
  MP_STATUS_PANIC = 8,
} MpStatus;

/**
 * The outcome of one simulation.
 */
typedef struct MpRun MpRun;

/**
 * A validated scenario ready to run.
 */
typedef struct MpScenario MpScenario;

/**
 * Ego state of one simulation tick.
 */
typedef struct MpSample {
  double t;
  double x;
  double y;
  double heading;
  double v;
  double a_lon;
  double a_lat;
  double steer;
  /**
   * Smallest footprint gap to another vehicle; infinite without traffic.
   */
  double min_gap;
  enum MpMode mode;
} MpSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a scenario from JSON text. `config_json` may be null; otherwise it
 * holds planner configuration overrides.
 *
 * # Safety
 * `json` and `config_json` must be null or NUL-terminated strings; `out`
 * must be valid for a pointer write.
 */
enum MpStatus mp_scenario_from_json(const char *json,
                                    const char *config_json,
                                    struct MpScenario **out);

/**
 * Loads a built-in scenario: `lane_change`, `roundabout`, `left_turn` or
 * `emergency`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for a pointer
 * write.
 */
enum MpStatus mp_scenario_builtin(const char *name, struct MpScenario **out);

/**
 * Replaces the scenario's random seed.
 *
 * # Safety
 * `scenario` must be null or a handle from this API.
 */
enum MpStatus mp_scenario_set_seed(struct MpScenario *scenario, uint64_t seed);

/**
 * Releases a scenario; null is ignored.
 *
 * # Safety
 * `scenario` must be null or a handle from this API not yet freed.
 */
void mp_scenario_free(struct MpScenario *scenario);

/**
 * Simulates the scenario to completion.
 *
 * # Safety
 * `scenario` must be a handle from this API; `out` must be valid for a
 * pointer write.
 */
enum MpStatus mp_run(const struct MpScenario *scenario, struct MpRun **out);

/**
 * Whether the planner reported failure during the run.
 *
 * # Safety
 * `run` must be a handle from this API; `failed` must be valid for a write.
 */
enum MpStatus mp_run_failed(const struct MpRun *run, bool *failed);

/**
 * Number of logged ticks.
 *
 * # Safety
 * `run` must be a handle from this API; `count` must be valid for a write.
 */
enum MpStatus mp_run_tick_count(const struct MpRun *run, size_t *count);

/**
 * Ego sample of tick `index`.
 *
 * # Safety
 * `run` must be a handle from this API; `out` must be valid for a write.
 */
enum MpStatus mp_run_sample(const struct MpRun *run, size_t index, struct MpSample *out);

/**
 * Run metrics as JSON. Pass a null buffer with `cap == 0` to query the
 * required size, which includes the terminating NUL.
 *
 * # Safety
 * `run` must be a handle from this API; `buf` must be null or valid for
 * `cap` bytes; `needed` must be null or valid for a write.
 */
enum MpStatus mp_run_metrics_json(const struct MpRun *run, char *buf, size_t cap, size_t *needed);

/**
 * Writes the full log as CSV.
 *
 * # Safety
 * `run` must be a handle from this API; `path` a NUL-terminated string.
 */
enum MpStatus mp_run_write_csv(const struct MpRun *run, const char *path);

/**
 * Releases a run; null is ignored.
 *
 * # Safety
 * `run` must be null or a handle from this API not yet freed.
 */
void mp_run_free(struct MpRun *run);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Same size protocol as [`mp_run_metrics_json`].
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes; `needed` must be null or
 * valid for a write.
 */
enum MpStatus mp_last_error(char *buf, size_t cap, size_t *needed);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTION_PLANNER_H */
