#ifndef OWVIS_OWVIS_H
#define OWVIS_OWVIS_H

/* C interface to the open-world video instance segmentation library.
 *
 * Every function returns an owvis_status. On failure the message is
 * available from owvis_last_error() on the calling thread until the next
 * call. Strings returned through char** are owned by the caller and released
 * with owvis_string_free(). Handles are released with their _free function;
 * passing NULL to any _free function is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OWVIS_API __declspec(dllexport)
#elif defined(OWVIS_BUILDING_LIBRARY)
#define OWVIS_API __attribute__((visibility("default")))
#else
#define OWVIS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum owvis_status {
  OWVIS_OK = 0,
  OWVIS_ERR_ARGUMENT = 1,   /* null or malformed argument */
  OWVIS_ERR_PARSE = 2,      /* unreadable JSON or file format */
  OWVIS_ERR_VALIDATION = 3, /* data violates a schema or split invariant */
  OWVIS_ERR_CONFIG = 4,     /* invalid configuration or fingerprint mismatch */
  OWVIS_ERR_SHAPE = 5,      /* tensor shape mismatch */
  OWVIS_ERR_NONFINITE = 6,  /* a loss diverged */
  OWVIS_ERR_IO = 7,         /* file system failure */
  OWVIS_ERR_RUNTIME = 8     /* anything else */
} owvis_status;

typedef struct owvis_dataset owvis_dataset;
typedef struct owvis_split owvis_split;
typedef struct owvis_model owvis_model;

/* Receives one JSON object per training step. */
typedef void (*owvis_metrics_fn)(const char* json_line, void* user);

OWVIS_API const char* owvis_version(void);
OWVIS_API const char* owvis_last_error(void);
OWVIS_API const char* owvis_status_name(owvis_status status);
/* 1 for input problems (argument, parse, validation, config, shape), 0 otherwise. */
OWVIS_API int owvis_status_is_validation(owvis_status status);
OWVIS_API void owvis_string_free(char* s);

/* ---- configuration ---- */

/* Loads a run config (path may be NULL for defaults), applies "a.b=value"
 * overrides and returns the resolved JSON and its fingerprint. */
OWVIS_API owvis_status owvis_config_resolve(const char* path, const char* const* overrides, size_t n_overrides,
                                            char** config_json, char** fingerprint);
/* Resolved JSON of the built-in desk-scale run config. */
OWVIS_API owvis_status owvis_config_desk(char** config_json);

/* ---- datasets ---- */

/* Parses an annotation file. Frames are read lazily from `frames_root`
 * (defaults to the annotation file's directory) when first needed. */
OWVIS_API owvis_status owvis_dataset_load(const char* annotations_path, const char* frames_root,
                                          owvis_dataset** out);
/* Renders a synthetic dataset from a generator config (NULL: desk settings),
 * writes it under out_dir when out_dir is not NULL, and optionally returns it. */
OWVIS_API owvis_status owvis_synth_generate(const char* synth_config_json, const char* out_dir, owvis_dataset** out);
OWVIS_API owvis_status owvis_dataset_summary(const owvis_dataset* dataset, char** json);
OWVIS_API void owvis_dataset_free(owvis_dataset* dataset);

/* ---- splits ---- */

/* split_config_json holds one split recipe; NULL with a name of "A".."E"
 * selects a built-in recipe. */
OWVIS_API owvis_status owvis_split_build(const owvis_dataset* dataset, const char* split_config_json,
                                         const char* builtin_name, owvis_split** out);
OWVIS_API owvis_status owvis_split_load(const char* path, owvis_split** out);
/* Canonical serialization (byte-stable for a fixed seed). */
OWVIS_API owvis_status owvis_split_serialize(const owvis_split* split, char** json);
/* Report of violations and suppressed instances; *ok is 1 when there are no violations. */
OWVIS_API owvis_status owvis_split_validate(const owvis_split* split, const owvis_dataset* dataset, char** report_json,
                                            int* ok);
OWVIS_API owvis_status owvis_split_stats(const owvis_split* split, const owvis_dataset* dataset, char** json);
OWVIS_API void owvis_split_free(owvis_split* split);

/* ---- models ---- */

/* Trains a fresh model on the split's first task. */
OWVIS_API owvis_status owvis_train_first(const char* config_json, const owvis_dataset* dataset,
                                         const owvis_split* split, owvis_metrics_fn on_step, void* user,
                                         owvis_model** out);
/* Advances the model by one task with the incremental protocol. When
 * exemplars_json is not NULL it receives the replay sample. */
OWVIS_API owvis_status owvis_train_next(owvis_model* model, const owvis_dataset* dataset, const owvis_split* split,
                                        owvis_metrics_fn on_step, void* user, char** exemplars_json);
OWVIS_API owvis_status owvis_model_load(const char* checkpoint_path, owvis_model** out);
OWVIS_API owvis_status owvis_model_save(const owvis_model* model, const char* checkpoint_path);
/* Config fingerprint the model was trained under. */
OWVIS_API owvis_status owvis_model_fingerprint(const owvis_model* model, char** fingerprint);
/* Number of completed tasks. */
OWVIS_API owvis_status owvis_model_task(const owvis_model* model, int* task);
/* Known-class ids after each completed task, as a JSON array of arrays. */
OWVIS_API owvis_status owvis_model_history(const owvis_model* model, char** json);
OWVIS_API void owvis_model_free(owvis_model* model);

/* ---- inference and evaluation ---- */

/* Predictions on the evaluation videos of `task` as a JSON document
 * {"fingerprint": ..., "predictions": [...]}. */
OWVIS_API owvis_status owvis_predict(owvis_model* model, const owvis_dataset* dataset, const owvis_split* split,
                                     int task, char** predictions_json);
/* Ground truth of the evaluation videos of `task` in prediction form: known
 * tracks with their category, not-yet-known tracks as category 0. */
OWVIS_API owvis_status owvis_oracle_predictions(const owvis_dataset* dataset, const owvis_split* split, int task,
                                                char** predictions_json);
/* Scores a predictions document. history_json lists known ids per completed
 * task (NULL: taken from the split). The report carries `fingerprint`. */
OWVIS_API owvis_status owvis_evaluate(const owvis_dataset* dataset, const owvis_split* split, int task,
                                      const char* predictions_json, const char* history_json,
                                      const char* fingerprint, char** report_json, char** report_table);
/* Writes objectness heat maps and mask overlays for one video. */
OWVIS_API owvis_status owvis_visualize(owvis_model* model, const owvis_dataset* dataset, int64_t video_id,
                                       const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
