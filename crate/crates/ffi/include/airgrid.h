#ifndef AIRGRID_H
#define AIRGRID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AirgridStatus {
  AIRGRID_STATUS_OK = 0,
  AIRGRID_STATUS_NULL_POINTER = 1,
  AIRGRID_STATUS_INVALID_ARGUMENT = 2,
  AIRGRID_STATUS_PARSE_ERROR = 3,
  AIRGRID_STATUS_VALIDATION_ERROR = 4,
  AIRGRID_STATUS_PLANNING_FAILED = 5,
  AIRGRID_STATUS_IO_ERROR = 6,
  AIRGRID_STATUS_INDEX_OUT_OF_RANGE = 7,
  AIRGRID_STATUS_PANIC = 8,
} AirgridStatus;

typedef enum AirgridMode {
  AIRGRID_MODE_SSP = 0,
  AIRGRID_MODE_NO_SLIDING_WINDOW = 1,
  AIRGRID_MODE_NO_ATTRACTION = 2,
  AIRGRID_MODE_RRT_ONLY = 3,
  AIRGRID_MODE_BIRRT_ONLY = 4,
} AirgridMode;

typedef enum AirgridFormat {
  AIRGRID_FORMAT_CSV = 0,
  AIRGRID_FORMAT_JSON_LINES = 1,
} AirgridFormat;

/**
 * Opaque simulation result handle.
 */
typedef struct AirgridResult AirgridResult;

/**
 * Opaque scenario handle.
 */
typedef struct AirgridScenario AirgridScenario;

typedef struct AirgridPoint {
  double x;
  double y;
  double z;
} AirgridPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *airgrid_last_error(void);

/**
 * Creates a scenario with every parameter at its default.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum AirgridStatus airgrid_scenario_default(struct AirgridScenario **out);

/**
 * Parses a TOML scenario.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum AirgridStatus airgrid_scenario_from_toml(const char *text, struct AirgridScenario **out);

/**
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void airgrid_scenario_free(struct AirgridScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum AirgridStatus airgrid_scenario_set_seed(struct AirgridScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum AirgridStatus airgrid_scenario_set_mode(struct AirgridScenario *scenario,
                                             enum AirgridMode mode);

/**
 * Replaces the listed UAVs with `count` randomly placed ones.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum AirgridStatus airgrid_scenario_set_random_uavs(struct AirgridScenario *scenario,
                                                    uint32_t count);

/**
 * Plans the scenario's single sub-airspace. Writes up to `capacity`
 * waypoints to `points`, the full count to `written` and the trajectory
 * cost to `cost`. Returns `IndexOutOfRange` when `capacity` is too small.
 *
 * # Safety
 * `points` must hold `capacity` elements (may be NULL when 0); `written`
 * and `cost` must be writable.
 */
enum AirgridStatus airgrid_plan_sub_airspace(const struct AirgridScenario *scenario,
                                             struct AirgridPoint *points,
                                             size_t capacity,
                                             size_t *written,
                                             double *cost);

/**
 * Runs the multi-UAV simulation to completion.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum AirgridStatus airgrid_simulate(const struct AirgridScenario *scenario,
                                    struct AirgridResult **out);

/**
 * # Safety
 * `result` must come from this library and not be used afterwards.
 */
void airgrid_result_free(struct AirgridResult *result);

/**
 * Number of UAVs in the run; 0 for NULL.
 *
 * # Safety
 * `result` must be a live handle or NULL.
 */
size_t airgrid_result_uav_count(const struct AirgridResult *result);

/**
 * Number of UAVs that reached their goal; 0 for NULL.
 *
 * # Safety
 * `result` must be a live handle or NULL.
 */
size_t airgrid_result_arrived_count(const struct AirgridResult *result);

/**
 * Highest simultaneous UAV count in any sub-airspace; 0 for NULL.
 *
 * # Safety
 * `result` must be a live handle or NULL.
 */
uint32_t airgrid_result_max_occupancy(const struct AirgridResult *result);

/**
 * Sum of flown lengths in meters; NaN for NULL.
 *
 * # Safety
 * `result` must be a live handle or NULL.
 */
double airgrid_result_total_length(const struct AirgridResult *result);

/**
 * Whether UAV `index` (0-based) arrived.
 *
 * # Safety
 * `result` must be a live handle; `arrived` must be writable.
 */
enum AirgridStatus airgrid_result_uav_arrived(const struct AirgridResult *result,
                                              size_t index,
                                              bool *arrived);

/**
 * Borrowed view of the waypoints of UAV `index` (0-based). The pointer
 * lives as long as the result handle.
 *
 * # Safety
 * `result` must be a live handle; `points` and `len` must be writable.
 */
enum AirgridStatus airgrid_result_waypoints(const struct AirgridResult *result,
                                            size_t index,
                                            const struct AirgridPoint **points,
                                            size_t *len);

/**
 * Writes the result tables into directory `dir`.
 *
 * # Safety
 * `result` must be a live handle; `dir` a NUL-terminated path.
 */
enum AirgridStatus airgrid_result_write(const struct AirgridResult *result,
                                        const char *dir,
                                        enum AirgridFormat format);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIRGRID_H */
