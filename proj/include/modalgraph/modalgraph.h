/* modalgraph C API.
 *
 * Opaque handles, status codes, and a thread-local last-error message. Strings
 * returned through char** are owned by the caller and released with
 * mg_string_free. Nothing here throws.
 */
#ifndef MODALGRAPH_H
#define MODALGRAPH_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define MG_API __attribute__((visibility("default")))
#else
#define MG_API
#endif

typedef enum mg_status {
  MG_OK = 0,
  MG_INVALID_ARGUMENT = 1,
  MG_CONFIG = 2,     /* bad config value, bad stage chain, missing upstream artifact */
  MG_NUMERICAL = 3,  /* singular system, divergence, NaN */
  MG_FORMAT = 4,     /* malformed or incompatible artifact */
  MG_IO = 5,
  MG_INTERNAL = 6
} mg_status;

typedef struct mg_config mg_config;
typedef struct mg_report mg_report;

typedef void (*mg_progress_fn)(const char* message, void* user);

MG_API const char* mg_version(void);
/* Message for the last non-OK status on this thread ("" if none). */
MG_API const char* mg_last_error(void);
MG_API const char* mg_status_name(mg_status s);
MG_API void mg_string_free(char* s);

/* --- run configuration --- */

/* desk_scale != 0 starts from the 10-truss desk recipe, else the full recipe. */
MG_API mg_status mg_config_create(int desk_scale, mg_config** out);
MG_API void mg_config_destroy(mg_config* cfg);
MG_API mg_status mg_config_load_ini(mg_config* cfg, const char* path);
/* key is "section.key", e.g. "train.epochs"; same parsing as the INI file. */
MG_API mg_status mg_config_set(mg_config* cfg, const char* key, const char* value);
MG_API mg_status mg_config_validate(const mg_config* cfg);
MG_API mg_status mg_config_to_json(const mg_config* cfg, char** out_json);

/* --- stages --- */

/* stage: gen-population, simulate, sense, train, decompose, identify,
 * baseline, ablate, report. */
MG_API mg_status mg_run_stage(const mg_config* cfg, const char* stage, mg_progress_fn progress, void* user);
/* Runs the configured stage list in dependency order. */
MG_API mg_status mg_run_pipeline(const mg_config* cfg, mg_progress_fn progress, void* user);

/* Desk-scale checks over the artifacts in the output directory, as a JSON
 * array of {name, passed, detail}. *all_passed is 0 if any check failed or
 * none could run. */
MG_API mg_status mg_desk_checks(const mg_config* cfg, char** out_json, int* all_passed);

/* Header/manifest of any container file (dataset, checkpoint, decomposition). */
MG_API mg_status mg_inspect(const char* path, char** out_json);

/* --- identification reports --- */

typedef enum mg_metric { MG_METRIC_MAC = 0, MG_METRIC_FREQUENCY_ERROR = 1, MG_METRIC_DAMPING_ERROR = 2 } mg_metric;

typedef struct mg_stats {
  double mean;
  double median;
  double std;
  int count;
} mg_stats;

MG_API mg_status mg_report_load(const char* path, mg_report** out);
MG_API void mg_report_destroy(mg_report* r);
MG_API int mg_report_n_target(const mg_report* r);
/* group: "train" or "held_out"; mode is 0-based. */
MG_API mg_status mg_report_stat(const mg_report* r, const char* group, mg_metric metric, int mode, mg_stats* out);
MG_API mg_status mg_report_table(const mg_report* r, char** out_text);

#ifdef __cplusplus
}
#endif

#endif
