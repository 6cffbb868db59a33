/* paradigmbench: C API for the paradigm benchmarking engine.
 *
 * The engine runs six inference-time reasoning paradigms (direct, cot, react,
 * plan_execute, reflection, recode) over a pluggable chat backend, scores them
 * with dataset-specific evaluators, keeps a resumable JSON result cache, and
 * trains a select-then-solve paradigm router.
 *
 * All rich inputs and outputs cross this boundary as JSON strings. Strings
 * returned through out-parameters are heap-allocated; release them with
 * pb_string_free(). Engine handles are opaque; release with pb_engine_free().
 */

#ifndef PARADIGMBENCH_H
#define PARADIGMBENCH_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct pb_engine pb_engine;

/* Status codes double as CLI exit codes. */
typedef enum pb_status {
    PB_OK = 0,
    PB_ERR_PARTIAL = 1,  /* run completed with failed cells; report written */
    PB_ERR_CONFIG = 2,   /* bad configuration, missing files, bad options */
    PB_ERR_RUNTIME = 3,  /* backend/tool failure outside a run loop */
    PB_ERR_INVALID = 4,  /* null argument or malformed JSON */
    PB_ERR_NOT_FOUND = 5 /* lookup produced no result */
} pb_status;

const char* pb_version(void);

/* config_json keys (all optional): workdir, results_dir, data_dir,
 * backend (live|scripted|replay|record), record_source, script, replay_log,
 * tool_log, search_fixture, prompts_dir, embed_cache, concurrency,
 * exec_cmd, exec_timeout_s, embedding_dim. */
pb_status pb_engine_new(const char* config_json, pb_engine** out_engine);
void pb_engine_free(pb_engine* engine);

/* Message for the most recent failing call on this engine. Owned by the
 * engine; valid until the next call on the same engine. */
const char* pb_engine_last_error(const pb_engine* engine);

/* Executes the run matrix described by options_json: models, paradigms,
 * datasets, n, seed, task_ids, format. Returns PB_ERR_PARTIAL when some
 * cells failed (details in <results_dir>/run_report.json). */
pb_status pb_run(pb_engine* engine, const char* options_json, char** out_report);

/* Summary, oracle, Jaccard and cost-tier tables over the cached results.
 * options_json: format (text|csv|json), oracle_subset (all|no-direct). */
pb_status pb_analyze(pb_engine* engine, const char* options_json, char** out_report);

/* Trains a paradigm router from cached results.
 * options_json: model (required), features (handcrafted|embedding|combined),
 * classifier (lr|mlp), seed, train_frac, out, format. */
pb_status pb_train_router(pb_engine* engine, const char* options_json, char** out_report);

/* Predicts a paradigm for one task file; with "solve": true also executes it.
 * options_json: task (required), model_file, model, solve, format. */
pb_status pb_route(pb_engine* engine, const char* options_json, char** out_report);

/* Zero-shot self-routing over the held-out split of the cached matrix.
 * options_json: model (required), seed, format. */
pb_status pb_selfroute(pb_engine* engine, const char* options_json, char** out_report);

/* Stateless helpers. */

/* Content of the last balanced \boxed{...} group, or PB_ERR_NOT_FOUND. */
pb_status pb_extract_boxed(const char* text, char** out_content);

/* QA-style normalization: lowercase, strip punctuation, drop articles,
 * collapse whitespace. */
pb_status pb_normalize_text(const char* text, char** out_normalized);

void pb_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PARADIGMBENCH_H */
