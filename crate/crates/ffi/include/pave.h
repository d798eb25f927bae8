#ifndef PAVE_H
#define PAVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result codes. Zero is success.
 */
typedef enum PaveStatus {
  PAVE_STATUS_OK = 0,
  PAVE_STATUS_NULL_POINTER = 1,
  PAVE_STATUS_INVALID_UTF8 = 2,
  PAVE_STATUS_INVALID_ARGUMENT = 3,
  PAVE_STATUS_INVALID_CONFIG = 4,
  PAVE_STATUS_BACKEND_ERROR = 5,
  PAVE_STATUS_PIPELINE_ERROR = 6,
  PAVE_STATUS_UNDEFINED = 7,
  PAVE_STATUS_PANIC = 99,
} PaveStatus;

/*
 Task kinds for [`pave_run`].
 */
typedef enum PaveTaskKind {
  PAVE_TASK_KIND_LABEL3 = 0,
  PAVE_TASK_KIND_SPAN = 1,
} PaveTaskKind;

/*
 A completion backend.
 */
typedef struct PaveBackend PaveBackend;

/*
 The result of one pipeline run.
 */
typedef struct PaveOutcome PaveOutcome;

/*
 A configured pipeline bound to a backend.
 */
typedef struct PavePipeline PavePipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *pave_version(void);

/*
 Message for the last failed call on this thread, or NULL. Valid until the
 next call into this library on the same thread.
 */
const char *pave_last_error(void);

/*
 Creates a scripted backend from a JSON script.

 # Safety
 `script_json` must be a valid NUL-terminated string and `out` a valid
 pointer.
 */
enum PaveStatus pave_backend_scripted_new(const char *script_json, struct PaveBackend **out);

/*
 Creates a backend for an OpenAI-compatible chat completions API, with
 the default retry policy. A NULL `api_key` reads `PAVE_API_KEY`.

 # Safety
 String arguments must be valid NUL-terminated strings (`api_key` may be
 NULL) and `out` a valid pointer.
 */
enum PaveStatus pave_backend_live_new(const char *base_url,
                                      const char *model,
                                      const char *api_key,
                                      uint64_t timeout_ms,
                                      struct PaveBackend **out);

/*
 Calls made through the backend so far; 0 for NULL.

 # Safety
 `backend` must be NULL or a live handle.
 */
uint64_t pave_backend_calls(const struct PaveBackend *backend);

/*
 # Safety
 `backend` must be NULL or a handle not yet freed. Pipelines created from
 it keep their own reference and remain usable.
 */
void pave_backend_free(struct PaveBackend *backend);

/*
 Creates a pipeline. `config_json` may be NULL for defaults, or a JSON
 object overriding any of `tau`, `variant`, `max_facts`, `max_revisions`,
 `temperature`, `seed`, `store_prompts`.

 # Safety
 `backend` must be a live handle, `config_json` NULL or a valid string,
 `out` a valid pointer.
 */
enum PaveStatus pave_pipeline_new(const struct PaveBackend *backend,
                                  const char *config_json,
                                  struct PavePipeline **out);

/*
 # Safety
 `pipeline` must be NULL or a handle not yet freed.
 */
void pave_pipeline_free(struct PavePipeline *pipeline);

/*
 Runs the configured variant on one question with its passages. `task`
 is a [`PaveTaskKind`] value.

 # Safety
 `pipeline` must be a live handle; `question_id` and `question` valid
 strings; `passages` an array of `n_passages` valid strings; `out` a
 valid pointer.
 */
enum PaveStatus pave_run(const struct PavePipeline *pipeline,
                         const char *question_id,
                         const char *question,
                         int32_t task,
                         const char *const *passages,
                         size_t n_passages,
                         struct PaveOutcome **out);

/*
 Final answer text; NULL for a NULL handle.

 # Safety
 `outcome` must be NULL or a live handle.
 */
const char *pave_outcome_final_answer(const struct PaveOutcome *outcome);

/*
 The audit trace as one line of JSON; NULL for a NULL handle.

 # Safety
 `outcome` must be NULL or a live handle.
 */
const char *pave_outcome_trace_json(const struct PaveOutcome *outcome);

/*
 # Safety
 `outcome` must be NULL or a live handle.
 */
bool pave_outcome_was_revised(const struct PaveOutcome *outcome);

/*
 Stage calls made for the example, format retries excluded.

 # Safety
 `outcome` must be NULL or a live handle.
 */
uint32_t pave_outcome_backend_calls(const struct PaveOutcome *outcome);

/*
 Support score of the draft. Returns `Undefined` for variants that do
 not score.

 # Safety
 `outcome` must be a live handle; `score` and `parse_ok` valid pointers.
 */
enum PaveStatus pave_outcome_support(const struct PaveOutcome *outcome,
                                     double *score,
                                     bool *parse_ok);

/*
 # Safety
 `outcome` must be NULL or a handle not yet freed.
 */
void pave_outcome_free(struct PaveOutcome *outcome);

/*
 True when a draft with support `score` is kept at threshold `tau`.
 */
bool pave_gate_keep(double score, double tau);

/*
 Parses support-scorer output. Unparseable text yields score 0 with
 `parse_ok` false and still returns `Ok`.

 # Safety
 `text` must be a valid string; `score` and `parse_ok` valid pointers.
 */
enum PaveStatus pave_parse_score(const char *text, double *score, bool *parse_ok);

/*
 Accuracy percentage rounded to 2 decimals.

 # Safety
 `out` must be a valid pointer.
 */
enum PaveStatus pave_accuracy_pct(uint64_t correct, uint64_t n, double *out);

/*
 Relative error reduction of `new_pct` over `baseline_pct`, 1 decimal.
 Returns `Undefined` for a perfect baseline.

 # Safety
 `out` must be a valid pointer.
 */
enum PaveStatus pave_relative_error_reduction(double baseline_pct, double new_pct, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAVE_H */
