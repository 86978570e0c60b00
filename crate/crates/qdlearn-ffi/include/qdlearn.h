/* C interface to the qdlearn distributed Q-learning simulator. */

#ifndef QDLEARN_H
#define QDLEARN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum qdl_status_t {
  QDL_OK = 0,
  // A required pointer argument was NULL.
  QDL_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  QDL_INVALID_UTF8 = 2,
  // Malformed JSON or an unknown preset name.
  QDL_PARSE_ERROR = 3,
  // The configuration is well-formed but fails a pre-run check.
  QDL_VALIDATION_ERROR = 4,
  QDL_IO_ERROR = 5,
  // An internal panic was caught at the boundary.
  QDL_PANIC = 6,
} qdl_status_t;

// Opaque experiment configuration handle.
typedef struct qdl_config_t qdl_config_t;

// Opaque finished-run handle.
typedef struct qdl_run_t qdl_run_t;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses a JSON experiment document into a new config handle.
enum qdl_status_t qdl_config_from_json(const char *json, struct qdl_config_t **out);

// Loads one of the presets embedded in the library.
enum qdl_status_t qdl_config_from_preset(const char *name, struct qdl_config_t **out);

// Serializes the (possibly overridden) config back to JSON.
enum qdl_status_t qdl_config_to_json(const struct qdl_config_t *config, char **out);

enum qdl_status_t qdl_config_set_seed(struct qdl_config_t *config, uint64_t seed);

enum qdl_status_t qdl_config_set_steps(struct qdl_config_t *config, uint64_t steps);

// Runs every pre-run check. Returns `QDL_OK` when all checks pass or are
// waived, `QDL_VALIDATION_ERROR` otherwise. When `report_json` is non-NULL
// it receives the full check list either way.
enum qdl_status_t qdl_config_validate(const struct qdl_config_t *config, char **report_json);

// Runs the experiment and hands back the finished record.
enum qdl_status_t qdl_run_experiment(const struct qdl_config_t *config, struct qdl_run_t **out);

// The run's summary (final metrics, oracle residual, waivers) as JSON.
enum qdl_status_t qdl_run_summary_json(const struct qdl_run_t *run, char **out);

// Writes the run's snapshot series as CSV to `path`.
enum qdl_status_t qdl_run_write_csv(const struct qdl_run_t *run, const char *path);

// Worst final per-agent distance to the exact fixed point.
enum qdl_status_t qdl_run_final_max_error(const struct qdl_run_t *run, double *out);

// Final worst per-agent distance from the agent-average table.
enum qdl_status_t qdl_run_final_consensus_distance(const struct qdl_run_t *run, double *out);

// Solves the exact fixed point of the config's model and returns it as
// JSON (`q_star`, `v_star`, `policy`, `residual`, `iterations`).
enum qdl_status_t qdl_solve_oracle_json(const struct qdl_config_t *config, char **out);

// The most recent failure message on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *qdl_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
void qdl_string_free(char *s);

// Releases a config handle. NULL is ignored.
void qdl_config_free(struct qdl_config_t *config);

// Releases a run handle. NULL is ignored.
void qdl_run_free(struct qdl_run_t *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QDLEARN_H */
