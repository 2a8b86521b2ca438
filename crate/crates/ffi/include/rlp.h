#ifndef RLP_H
#define RLP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum RlpStatus {
  RLP_STATUS_OK = 0,
  RLP_STATUS_NULL_ARGUMENT = 1,
  RLP_STATUS_INVALID_UTF8 = 2,
  RLP_STATUS_PARSE = 3,
  RLP_STATUS_INVALID_INPUT = 4,
  RLP_STATUS_PLAN_FAILED = 5,
  RLP_STATUS_IO = 6,
  RLP_STATUS_PANIC = 7,
} RlpStatus;

/**
 * Planner, simulator and generator settings.
 */
typedef struct RlpConfig RlpConfig;

/**
 * A finished simulated episode with its transcript.
 */
typedef struct RlpEpisode RlpEpisode;

/**
 * A parsed and validated scenario.
 */
typedef struct RlpScenario RlpScenario;

/**
 * Scalar episode metrics.
 */
typedef struct RlpMetrics {
  bool completed;
  bool collided;
  double motion_completion_time;
  double plan_to_motion_delay;
  double motion_duration;
  double robustness;
  uint64_t loops;
  uint64_t overruns;
  uint64_t switches;
} RlpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *rlp_last_error(void);

/**
 * Library version as a static string.
 */
const char *rlp_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void rlp_string_free(char *s);

/**
 * Parses and validates a scenario from JSON.
 *
 * # Safety
 * `json` is a nul-terminated string; `out` is writable.
 */
enum RlpStatus rlp_scenario_from_json(const char *json, struct RlpScenario **out);

/**
 * Overrides the scenario seed.
 *
 * # Safety
 * `scenario` is a live handle.
 */
enum RlpStatus rlp_scenario_set_seed(struct RlpScenario *scenario, uint64_t seed);

/**
 * Number of robot degrees of freedom in the scenario, or 0 for null.
 *
 * # Safety
 * `scenario` is null or a live handle.
 */
uintptr_t rlp_scenario_dof(const struct RlpScenario *scenario);

/**
 * # Safety
 * `scenario` is null or a live handle, not used afterwards.
 */
void rlp_scenario_free(struct RlpScenario *scenario);

/**
 * Parses a configuration from JSON; missing fields take their defaults.
 *
 * # Safety
 * `json` is a nul-terminated string; `out` is writable.
 */
enum RlpStatus rlp_config_from_json(const char *json, struct RlpConfig **out);

/**
 * # Safety
 * `config` is null or a live handle, not used afterwards.
 */
void rlp_config_free(struct RlpConfig *config);

/**
 * Plans once from the scenario start and writes the report as JSON to `out_json`.
 * Returns `PlanFailed` (with the report still written) when no trajectory was found.
 * `config` may be null for defaults. `method` is one of rlp, rlp-mm, rlp-minus, rrt.
 *
 * # Safety
 * `scenario` is a live handle, `config` null or live, `method` a nul-terminated
 * string and `out_json` writable.
 */
enum RlpStatus rlp_plan(const struct RlpScenario *scenario,
                        const struct RlpConfig *config,
                        const char *method,
                        char **out_json);

/**
 * Simulates a full episode. Incomplete episodes still succeed; inspect the metrics.
 *
 * # Safety
 * `scenario` is a live handle, `config` null or live, `method` a nul-terminated
 * string and `out` writable.
 */
enum RlpStatus rlp_simulate(const struct RlpScenario *scenario,
                            const struct RlpConfig *config,
                            const char *method,
                            struct RlpEpisode **out);

/**
 * Copies the episode metrics into `out`.
 *
 * # Safety
 * `episode` is a live handle and `out` writable.
 */
enum RlpStatus rlp_episode_metrics(const struct RlpEpisode *episode, struct RlpMetrics *out);

/**
 * Writes the final executed joint positions into `buf` (capacity `len`) and the
 * number of joints into `written`. Fails with `InvalidInput` if `len` is too small.
 *
 * # Safety
 * `episode` is a live handle, `buf` has room for `len` doubles, `written` is writable.
 */
enum RlpStatus rlp_episode_final_state(const struct RlpEpisode *episode,
                                       double *buf,
                                       uintptr_t len,
                                       uintptr_t *written);

/**
 * Short name of how the episode ended, as a static string.
 *
 * # Safety
 * `episode` is null or a live handle.
 */
const char *rlp_episode_termination(const struct RlpEpisode *episode);

/**
 * Serializes the whole episode (metrics, transcript, final state) as JSON.
 *
 * # Safety
 * `episode` is a live handle and `out_json` writable.
 */
enum RlpStatus rlp_episode_to_json(const struct RlpEpisode *episode, char **out_json);

/**
 * # Safety
 * `episode` is null or a live handle, not used afterwards.
 */
void rlp_episode_free(struct RlpEpisode *episode);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RLP_H */
