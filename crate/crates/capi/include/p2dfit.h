#ifndef P2DFIT_H
#define P2DFIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Forward model selector.
 */
typedef enum P2dfitModel {
  P2DFIT_MODEL_SPM_EQ = 0,
  P2DFIT_MODEL_SPM = 1,
  P2DFIT_MODEL_P2D = 2,
  P2DFIT_MODEL_P2DT = 3,
} P2dfitModel;

/**
 * Status codes mirroring the CLI exit codes.
 */
typedef enum P2dfitStatus {
  P2DFIT_STATUS_OK = 0,
  /**
   * Null pointer, malformed input, or unreadable file.
   */
  P2DFIT_STATUS_INVALID_INPUT = 2,
  /**
   * A fitting stage failed.
   */
  P2DFIT_STATUS_PIPELINE_FAILURE = 3,
  /**
   * The solver failed beyond recovery.
   */
  P2DFIT_STATUS_NUMERICAL_FAILURE = 4,
  /**
   * A panic crossed the boundary; state is still consistent.
   */
  P2DFIT_STATUS_INTERNAL = 70,
} P2dfitStatus;

/**
 * Trace column selector for [`p2dfit_trace_copy`].
 */
typedef enum P2dfitTraceColumn {
  P2DFIT_TRACE_COLUMN_TIME_S = 0,
  P2DFIT_TRACE_COLUMN_CURRENT_A = 1,
  P2DFIT_TRACE_COLUMN_VOLTAGE_V = 2,
  P2DFIT_TRACE_COLUMN_TEMPERATURE_K = 3,
} P2dfitTraceColumn;

/**
 * Opaque configuration handle.
 */
typedef struct P2dfitConfig P2dfitConfig;

/**
 * Opaque simulation trace handle.
 */
typedef struct P2dfitTrace P2dfitTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread; valid until the next failing call.
 */
const char *p2dfit_last_error(void);

/**
 * Release a string returned by the library.
 *
 * # Safety
 * `s` must be a pointer previously returned by a p2dfit function that
 * transfers string ownership, and not freed before.
 */
void p2dfit_string_free(char *s);

/**
 * Compiled-in default configuration.
 */
struct P2dfitConfig *p2dfit_config_default(void);

/**
 * Load a TOML configuration file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle.
 */
enum P2dfitStatus p2dfit_config_load(const char *path, struct P2dfitConfig **out);

/**
 * Release a configuration handle.
 *
 * # Safety
 * `cfg` must come from `p2dfit_config_default`/`p2dfit_config_load` and
 * not be freed twice.
 */
void p2dfit_config_free(struct P2dfitConfig *cfg);

/**
 * Grouped parameters of the configured cell as a JSON object string
 * (caller frees with [`p2dfit_string_free`]).
 *
 * # Safety
 * `cfg` must be a live configuration handle; `out` a valid out-pointer.
 */
enum P2dfitStatus p2dfit_grouped_json(const struct P2dfitConfig *cfg, char **out);

/**
 * Run the configured protocol on the chosen model; returns a trace handle.
 *
 * # Safety
 * `cfg` must be a live configuration handle; `out` a valid out-pointer.
 */
enum P2dfitStatus p2dfit_simulate(const struct P2dfitConfig *cfg,
                                  enum P2dfitModel model,
                                  struct P2dfitTrace **out);

/**
 * Number of records in a trace.
 *
 * # Safety
 * `trace` must be a live trace handle (null yields 0).
 */
uintptr_t p2dfit_trace_len(const struct P2dfitTrace *trace);

/**
 * Copy one trace column into a caller buffer of at least
 * `p2dfit_trace_len` elements.
 *
 * # Safety
 * `trace` must be a live trace handle and `buf` must point to at least
 * `len` writable doubles.
 */
enum P2dfitStatus p2dfit_trace_copy(const struct P2dfitTrace *trace,
                                    enum P2dfitTraceColumn column,
                                    double *buf,
                                    uintptr_t len);

/**
 * Release a trace handle.
 *
 * # Safety
 * `trace` must come from `p2dfit_simulate` and not be freed twice.
 */
void p2dfit_trace_free(struct P2dfitTrace *trace);

/**
 * Generate the configured synthetic data set and write it as CSV.
 *
 * # Safety
 * `cfg` must be a live configuration handle; `path` a valid NUL-terminated
 * string.
 */
enum P2dfitStatus p2dfit_synth_to_file(const struct P2dfitConfig *cfg, const char *path);

/**
 * Run the staged identification pipeline on a data CSV; returns the
 * pipeline report as a JSON string (caller frees with
 * [`p2dfit_string_free`]).
 *
 * # Safety
 * `cfg` must be a live configuration handle; `data_path` a valid
 * NUL-terminated string; `out_json` a valid out-pointer.
 */
enum P2dfitStatus p2dfit_identify_file(const struct P2dfitConfig *cfg,
                                       const char *data_path,
                                       bool perturb_start,
                                       char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* P2DFIT_H */
