#pragma once
// Executes the (model x paradigm x dataset x task) matrix with JSON caching,
// resumability and bounded parallelism; aggregates metrics.

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pb/core.hpp"
#include "pb/paradigms.hpp"
#include "pb/reports.hpp"

namespace pb {

struct RunPlan {
    std::vector<std::string> models;
    std::vector<ParadigmId> paradigms;
    std::vector<DatasetId> datasets;
    std::optional<size_t> task_count;    // per dataset; nullopt = all
    std::vector<std::string> task_ids;   // optional explicit id filter
    uint64_t seed = 42;
    std::string results_dir;
    int concurrency = 1;
};

// --- record serialization (cache file schema) ------------------------------

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);  // throws on malformed input

// {results_dir}/{model}/{paradigm}/{dataset}/{task_id}.json; path components
// are sanitized but the record content keeps the exact ids.
std::string cache_path(const std::string& results_dir, const RunKey& key);
void save_record_atomic(const std::string& results_dir, const RunRecord& r);
std::optional<RunRecord> load_cached_record(const std::string& results_dir, const RunKey& key);

// Loads every parseable cache file under results_dir.
RunMatrix load_matrix(const std::string& results_dir);
// Matrix-level persistence round-trip (writes one cache file per record).
void save_matrix(const std::string& results_dir, const RunMatrix& m);

// --- dataset input ----------------------------------------------------------

// JSON Lines, one task per line: {"id":..., "question":..., "answer":...,
// "choices":[...]?, "metadata":{...}?}.
std::vector<Task> load_tasks_jsonl(const std::string& path, DatasetId dataset);
Task task_from_json(const nlohmann::json& j, std::optional<DatasetId> dataset);

// Deterministic shuffle keyed by (seed, dataset), then the first n tasks.
// Tasks are ordered by id before shuffling so file order does not matter.
std::vector<Task> select_tasks(DatasetId dataset, const std::vector<Task>& all_tasks,
                               std::optional<size_t> n, uint64_t seed);
// Shared shuffle used by select_tasks and the router's split.
void shuffle_for_dataset(std::vector<Task>& tasks, DatasetId dataset, uint64_t seed);

// --- execution ---------------------------------------------------------------

struct RunEnv {
    Backend* backend = nullptr;
    std::shared_ptr<tools::Registry> tools;
    ParadigmConfig config;
    // tasks per dataset, already filtered/selected
    std::map<DatasetId, std::vector<Task>> tasks;
    std::shared_ptr<tools::CodeSandbox> eval_sandbox;  // execution-based scoring
};

struct RunReport {
    int64_t executed = 0;
    int64_t cached = 0;
    struct Failure {
        RunKey key;
        std::string error;
    };
    std::vector<Failure> failures;
};

// Executes one cell end to end (paradigm + evaluation); no caching.
RunRecord execute_cell(const std::string& model, ParadigmId paradigm, DatasetId dataset,
                       const Task& task, RunEnv& env);

RunMatrix run_matrix(const RunPlan& plan, RunEnv& env, RunReport* report);

// Failure list persisted next to the cache so gaps are visible and re-runnable.
void write_run_report(const std::string& results_dir, const RunReport& report);

// --- aggregation -------------------------------------------------------------

struct SummaryCell {
    std::string model;
    ParadigmId paradigm;
    DatasetId dataset;
    size_t n = 0;
    double success_rate = 0.0;  // percent
    double mean_tokens = 0.0;
    double mean_llm_calls = 0.0;
    double mean_tool_calls = 0.0;
    double mean_wall_ms = 0.0;
};

struct SummaryAvg {
    std::string model;
    ParadigmId paradigm;
    double avg_rate = 0.0;  // unweighted mean over datasets present
    size_t datasets = 0;
};

struct SummaryTable {
    std::vector<SummaryCell> cells;
    std::vector<SummaryAvg> avgs;
};

SummaryTable summarize(const RunMatrix& matrix);
std::vector<Table> summary_tables(const SummaryTable& s);

// Mean-token multiplier of each paradigm relative to the baseline, over shared
// (model, dataset, task) keys. Throws when the baseline has no shared records.
std::map<ParadigmId, double> cost_tiers(const RunMatrix& matrix, ParadigmId baseline);
Table cost_tier_table(const std::map<ParadigmId, double>& tiers, ParadigmId baseline);

}  // namespace pb
