#ifndef ERUDITE_SIM_H
#define ERUDITE_SIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ErsStatus {
  ERS_STATUS_OK = 0,
  ERS_STATUS_NULL_ARGUMENT = 1,
  ERS_STATUS_INVALID_UTF8 = 2,
  /**
   * Scenario text or a parameter failed validation.
   */
  ERS_STATUS_CONFIG = 3,
  /**
   * The simulation tripped an internal invariant.
   */
  ERS_STATUS_INVARIANT = 4,
  /**
   * Unknown metric, preset or parameter name.
   */
  ERS_STATUS_NOT_FOUND = 5,
  ERS_STATUS_PANIC = 6,
} ErsStatus;

typedef enum ErsPath {
  ERS_PATH_BASELINE = 0,
  ERS_PATH_ERUDITE = 1,
} ErsPath;

/**
 * Opaque report handle.
 */
typedef struct ErsReport ErsReport;

/**
 * Opaque scenario handle.
 */
typedef struct ErsScenario ErsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next call.
 */
const char *ers_last_error(void);

/**
 * Parses and validates TOML scenario text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum ErsStatus ers_scenario_parse(const char *toml, struct ErsScenario **out);

/**
 * Loads a built-in preset by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum ErsStatus ers_scenario_preset(const char *name, struct ErsScenario **out);

/**
 * Sets a sweepable parameter (`granularity`, `threads`, `initiation_rate`,
 * `header_bytes`, `ssd_count`) and revalidates.
 *
 * # Safety
 * `scenario` must come from this library; `param` must be NUL-terminated.
 */
enum ErsStatus ers_scenario_set(struct ErsScenario *scenario, const char *param, uint64_t value);

/**
 * # Safety
 * `scenario` must come from this library or be null.
 */
void ers_scenario_free(struct ErsScenario *scenario);

/**
 * Runs one path to the scenario horizon.
 *
 * # Safety
 * `scenario` must come from this library; `out` must be writable.
 */
enum ErsStatus ers_simulate(const struct ErsScenario *scenario,
                            enum ErsPath path,
                            struct ErsReport **out);

/**
 * Reads a scalar metric by column name, e.g. `useful_bandwidth`.
 *
 * # Safety
 * `report` must come from this library; `metric` NUL-terminated; `out` writable.
 */
enum ErsStatus ers_report_get(const struct ErsReport *report, const char *metric, double *out);

/**
 * # Safety
 * `report` must come from this library or be null.
 */
void ers_report_free(struct ErsReport *report);

/**
 * Requests in flight needed to saturate a link of `bandwidth` bytes/s at
 * `latency_ns` with `granularity`-byte payloads and `header` bytes each.
 *
 * # Safety
 * `out` must be writable.
 */
enum ErsStatus ers_required_inflight(uint64_t bandwidth,
                                     uint64_t latency_ns,
                                     uint64_t granularity,
                                     uint64_t header,
                                     uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERUDITE_SIM_H */
