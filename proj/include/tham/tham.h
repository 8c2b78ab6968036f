#ifndef THAM_THAM_H
#define THAM_THAM_H

/* C interface to the THAM training and inference pipeline.
 *
 * Objects are opaque handles released with their matching *_free call.
 * Every fallible call returns a tham_status; on failure tham_last_error()
 * describes the problem until the next call on the same thread. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with tham_string_free(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(THAM_BUILDING_LIBRARY)
#    define THAM_API __declspec(dllexport)
#  else
#    define THAM_API __declspec(dllimport)
#  endif
#else
#  define THAM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tham_status {
  THAM_OK = 0,
  THAM_ERR_CONFIG = 2,   /* configuration, schema or argument error */
  THAM_ERR_NUMERIC = 3,  /* non-finite loss or gradient */
  THAM_ERR_IO = 4,       /* file missing, unreadable or unwritable */
  THAM_ERR_PARSE = 5,    /* malformed input content */
  THAM_ERR_SHAPE = 6,    /* inconsistent array shapes */
  THAM_ERR_INVALID = 7,  /* precondition violated */
  THAM_ERR_INTERNAL = 8
} tham_status;

typedef struct tham_config tham_config;
typedef struct tham_cohort tham_cohort;
typedef struct tham_model tham_model;

/* Called once per finished epoch with one JSON object (no newline). */
typedef void (*tham_epoch_callback)(const char* json_line, void* user);

THAM_API const char* tham_version(void);
THAM_API const char* tham_last_error(void);
THAM_API void tham_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

THAM_API tham_status tham_config_new(tham_config** out);
THAM_API tham_status tham_config_load(const char* path, tham_config** out);
/* Rejects unknown keys. */
THAM_API tham_status tham_config_set(tham_config* cfg, const char* key, const char* value);
/* Every key with its resolved value, one "key = value" line each. */
THAM_API tham_status tham_config_resolved(const tham_config* cfg, char** text_out);
THAM_API tham_status tham_config_write(const tham_config* cfg, const char* path);
/* One "key  help" line per known key. */
THAM_API tham_status tham_config_help(char** text_out);
THAM_API void tham_config_free(tham_config* cfg);

/* ---- data ------------------------------------------------------------- */

/* Writes cohort.jsonl, ontology.tsv, truth.json and resolved.cfg. */
THAM_API tham_status tham_generate(const tham_config* cfg, const char* out_dir);

THAM_API tham_status tham_cohort_load_jsonl(const char* path, tham_cohort** out);
/* `prescriptions` may be NULL. */
THAM_API tham_status tham_cohort_load_mimic(const char* admissions, const char* diagnoses,
                                            const char* prescriptions, tham_cohort** out);
THAM_API size_t tham_cohort_patient_count(const tham_cohort* cohort);
/* Newline-separated loader warnings (possibly empty). */
THAM_API tham_status tham_cohort_warnings(const tham_cohort* cohort, char** text_out);
THAM_API void tham_cohort_free(tham_cohort* cohort);

/* Writes B_DC.coo and A_CC.coo built from the configured training split,
 * plus code_vocab.tsv and drug_vocab.tsv naming their rows and columns. */
THAM_API tham_status tham_build_graphs(const tham_config* cfg, const tham_cohort* cohort,
                                       const char* out_dir);

/* ---- models ----------------------------------------------------------- */

/* Trains on the configured split. `ontology_path` may be NULL (flat codes).
 * With `out_dir` set, writes model.tham, train_log.jsonl and resolved.cfg.
 * `callback` and `out` may be NULL. */
THAM_API tham_status tham_train(const tham_config* cfg, const tham_cohort* cohort,
                                const char* ontology_path, const char* out_dir,
                                tham_epoch_callback callback, void* user, tham_model** out);

THAM_API tham_status tham_model_load(const char* path, tham_model** out);
THAM_API tham_status tham_model_save(const tham_model* model, const char* path);
/* "diagnosis" or "heart_failure". */
THAM_API const char* tham_model_task(const tham_model* model);
THAM_API void tham_model_free(tham_model* model);

/* Evaluates one or more checkpoints (one per seed) on a split of `cohort`
 * ("train", "valid", "test" or "all") and reports per-seed, mean and std
 * metrics as JSON. `expected_task` may be NULL; a mismatch is a config error. */
THAM_API tham_status tham_evaluate(tham_model* const* models, size_t n_models,
                                   const tham_cohort* cohort, const char* split,
                                   const size_t* ks, size_t n_ks, const char* expected_task,
                                   char** json_out);

/* Predicts the visit after the given patient's visits. `patient_json` is one
 * line of the cohort JSONL schema. */
THAM_API tham_status tham_predict_json(tham_model* model, const char* patient_json, size_t k,
                                       char** json_out);

/* Writes code_embeddings.tsv and drug_embeddings.tsv of the final graph
 * features. */
THAM_API tham_status tham_export_embeddings(tham_model* model, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* THAM_THAM_H */
