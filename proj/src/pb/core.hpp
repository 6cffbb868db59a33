#pragma once
// Domain model shared by all other modules. No I/O here.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pb {

// The six inference-time policies, in canonical order. The order is load-bearing:
// it drives tie-breaking, one-hot layouts and report column order.
enum class ParadigmId : int {
    Direct = 0,
    CoT = 1,
    ReAct = 2,
    PlanExecute = 3,
    Reflection = 4,
    ReCode = 5,
};
inline constexpr int kParadigmCount = 6;

// The ten benchmarks, in the fixed order used by the router's one-hot layout.
enum class DatasetId : int {
    HumanEval = 0,
    MATH500 = 1,
    AIME = 2,
    HotpotQA = 3,
    NQ = 4,
    MMLU = 5,
    HLE = 6,
    GAIA = 7,
    TauBench = 8,
    SEAL = 9,
};
inline constexpr int kDatasetCount = 10;

int canonical_order(ParadigmId p);
const std::vector<ParadigmId>& all_paradigms();
const std::vector<DatasetId>& all_datasets();

// Lowercase identifiers used in file paths, report rows and the CLI.
std::string paradigm_name(ParadigmId p);
std::string dataset_name(DatasetId d);
std::optional<ParadigmId> parse_paradigm(const std::string& name);
std::optional<DatasetId> parse_dataset(const std::string& name);

// One benchmark item. `reference` holds the gold answer (or, for action-sequence
// tasks, a JSON list of action strings). `dataset` is empty only for ad-hoc
// tasks fed to the router from user files.
struct Task {
    std::string id;
    std::optional<DatasetId> dataset;
    std::string prompt;
    std::string reference;
    std::vector<std::string> choices;
    std::map<std::string, std::string> metadata;

    bool operator==(const Task&) const = default;
};

struct StepEvent {
    enum class Kind { LlmCall, ToolCall, Note };
    Kind kind = Kind::Note;
    std::string request;   // llm_call: rendered message list; tool_call: tool input
    std::string response;  // llm_call: model content; tool_call: tool output; note: text
    std::string tool;      // tool_call only: registered tool name
    int64_t tokens_in = 0;
    int64_t tokens_out = 0;
    int64_t elapsed_ms = 0;

    bool operator==(const StepEvent&) const = default;
};

std::string step_kind_name(StepEvent::Kind k);
std::optional<StepEvent::Kind> parse_step_kind(const std::string& name);

// Outcome of one (model, paradigm, task) execution.
struct RunRecord {
    std::string model;
    ParadigmId paradigm = ParadigmId::Direct;
    DatasetId dataset = DatasetId::HumanEval;
    std::string task_id;
    bool success = false;
    std::string answer;
    std::string reference;
    int64_t tokens_total = 0;
    int64_t llm_calls = 0;
    int64_t tool_calls = 0;
    int64_t wall_ms = 0;
    std::vector<StepEvent> trace;
    std::string created_at;

    bool operator==(const RunRecord&) const = default;
    // Field-by-field equality ignoring the wall-clock stamp; used by the
    // record/replay determinism checks.
    bool equal_ignoring_created_at(const RunRecord& other) const;
};

struct RunKey {
    std::string model;
    ParadigmId paradigm = ParadigmId::Direct;
    DatasetId dataset = DatasetId::HumanEval;
    std::string task_id;

    bool operator==(const RunKey&) const = default;
    bool operator<(const RunKey& o) const;
    std::string to_string() const;
};
RunKey key_of(const RunRecord& r);

// Indexed collection of RunRecords; at most one record per (model, paradigm,
// dataset, task_id). Inserting a duplicate key replaces the prior record.
// Reads are safe concurrently; the runner serializes writes.
class RunMatrix {
  public:
    // Returns true when an existing record was replaced.
    bool insert(RunRecord r);
    const RunRecord* find(const RunKey& key) const;
    size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    // All records, in key order (deterministic iteration).
    std::vector<const RunRecord*> all() const;
    std::vector<const RunRecord*> by_model_task(const std::string& model, DatasetId dataset,
                                                const std::string& task_id) const;
    std::vector<const RunRecord*> by_model_paradigm(const std::string& model, ParadigmId p) const;

    std::vector<std::string> models() const;
    // Distinct (dataset, task_id) pairs with any record for the model.
    std::vector<std::pair<DatasetId, std::string>> tasks_of_model(const std::string& model) const;

    bool operator==(const RunMatrix& o) const { return records_ == o.records_; }

  private:
    std::map<RunKey, RunRecord> records_;
};

}  // namespace pb
