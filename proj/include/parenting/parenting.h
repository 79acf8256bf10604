#ifndef PARENTING_PARENTING_H
#define PARENTING_PARENTING_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PT_API __declspec(dllexport)
#else
#define PT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pt_status {
  PT_OK = 0,
  PT_ERR_INVALID_ARGUMENT = 1, /* bad config value or null handle */
  PT_ERR_IO = 2,               /* file missing or unwritable */
  PT_ERR_DATA = 3,             /* malformed dataset, checkpoint or candidates */
  PT_ERR_RUNTIME = 4           /* training diverged or other internal failure */
} pt_status;

typedef struct pt_dataset pt_dataset;
typedef struct pt_model pt_model;

typedef struct pt_parent_score {
  double precision;
  double recall_reference;
  double coverage_table;
  double recall;
  double f_score;
} pt_parent_score;

/* Called once per training log record with a single JSON line (no newline). */
typedef void (*pt_log_fn)(const char* json_line, void* user);

PT_API const char* pt_version(void);

/* Message of the last failed call on this thread; empty when none. */
PT_API const char* pt_last_error(void);

/* Strings returned through char** out-parameters are owned by the caller. */
PT_API void pt_string_free(char* s);

/* Caps worker threads for every later call; 0 restores the hardware default. */
PT_API void pt_set_threads(size_t threads);

PT_API pt_status pt_dataset_load(const char* path, pt_dataset** out);
PT_API pt_status pt_dataset_save(const pt_dataset* data, const char* path);
PT_API size_t pt_dataset_size(const pt_dataset* data);
PT_API void pt_dataset_free(pt_dataset* data);

/* config_json keys: schema, count, hallucination, omission, seed. Writes
   {train,dev,test}.jsonl plus .annotations.jsonl sidecars into out_dir and
   returns a JSON summary with split sizes. */
PT_API pt_status pt_make_data(const char* config_json, const char* out_dir, char** summary_json);

/* Fills defaults for the phase ("mle" or "rl") and validates. */
PT_API pt_status pt_train_config_resolve(const char* phase, const char* config_json, char** resolved_json);

/* phase "mle": init may be NULL (fresh model) or a checkpoint to continue.
   phase "rl": init is the pretrained checkpoint and must not be NULL.
   Returns the dev-selected model and a JSON summary. */
PT_API pt_status pt_train(const char* phase, const pt_dataset* train, const pt_dataset* dev, const pt_model* init,
                          const char* config_json, pt_log_fn log, void* user, pt_model** out, char** summary_json);

PT_API pt_status pt_model_load(const char* path, pt_model** out);
PT_API pt_status pt_model_save(const pt_model* model, const char* path);
PT_API void pt_model_free(pt_model* model);

/* mode "greedy" or "sample"; one output line per instance. */
PT_API pt_status pt_generate(const pt_model* model, const pt_dataset* data, const char* mode, uint64_t seed,
                             size_t max_len, char** lines);

/* candidates: one whitespace-tokenized sentence per line. */
PT_API pt_status pt_score(const pt_dataset* data, const char* candidates, double lambda, char** report_json,
                          char** table_text);

/* Length statistics of b against a, a length threshold from k-means on the
   reference lengths, and length-conditioned scores for both systems. */
PT_API pt_status pt_analyze(const pt_dataset* data, const char* candidates_a, const char* candidates_b, double lambda,
                            char** report_json, char** table_text);

/* instance_json is one dataset line. */
PT_API pt_status pt_parent(const char* candidate, const char* instance_json, double lambda, pt_parent_score* out);

PT_API pt_status pt_copy_count(const char* candidate, const char* instance_json, size_t* out);

PT_API pt_status pt_cluster_lengths(const double* lengths, size_t n, size_t k, double* threshold);

#ifdef __cplusplus
}
#endif

#endif
