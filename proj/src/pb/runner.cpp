#include "pb/runner.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "pb/evalkit.hpp"
#include "pb/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace pb {

// ---------------------------------------------------------------------------
// Record serialization

namespace {

json event_to_json(const StepEvent& e) {
    return json{{"kind", step_kind_name(e.kind)},
                {"request", e.request},
                {"response", e.response},
                {"tool", e.tool},
                {"tokens_in", e.tokens_in},
                {"tokens_out", e.tokens_out},
                {"elapsed_ms", e.elapsed_ms}};
}

StepEvent event_from_json(const json& j) {
    StepEvent e;
    auto kind = parse_step_kind(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("bad step kind");
    e.kind = *kind;
    e.request = j.value("request", "");
    e.response = j.value("response", "");
    e.tool = j.value("tool", "");
    e.tokens_in = j.value("tokens_in", int64_t{0});
    e.tokens_out = j.value("tokens_out", int64_t{0});
    e.elapsed_ms = j.value("elapsed_ms", int64_t{0});
    return e;
}

}  // namespace

json record_to_json(const RunRecord& r) {
    json trace = json::array();
    for (const auto& e : r.trace) trace.push_back(event_to_json(e));
    return json{{"model", r.model},
                {"paradigm", paradigm_name(r.paradigm)},
                {"dataset", dataset_name(r.dataset)},
                {"task_id", r.task_id},
                {"success", r.success},
                {"answer", r.answer},
                {"reference", r.reference},
                {"tokens_total", r.tokens_total},
                {"llm_calls", r.llm_calls},
                {"tool_calls", r.tool_calls},
                {"wall_ms", r.wall_ms},
                {"trace", trace},
                {"created_at", r.created_at}};
}

RunRecord record_from_json(const json& j) {
    RunRecord r;
    r.model = j.at("model").get<std::string>();
    auto paradigm = parse_paradigm(j.at("paradigm").get<std::string>());
    auto dataset = parse_dataset(j.at("dataset").get<std::string>());
    if (!paradigm || !dataset) throw std::runtime_error("bad paradigm/dataset name");
    r.paradigm = *paradigm;
    r.dataset = *dataset;
    r.task_id = j.at("task_id").get<std::string>();
    r.success = j.at("success").get<bool>();
    r.answer = j.value("answer", "");
    r.reference = j.value("reference", "");
    r.tokens_total = j.at("tokens_total").get<int64_t>();
    r.llm_calls = j.at("llm_calls").get<int64_t>();
    r.tool_calls = j.at("tool_calls").get<int64_t>();
    r.wall_ms = j.at("wall_ms").get<int64_t>();
    for (const auto& e : j.at("trace")) r.trace.push_back(event_from_json(e));
    r.created_at = j.value("created_at", "");
    return r;
}

// ---------------------------------------------------------------------------
// Cache layout

namespace {

// Path components must be shell-safe; ids keep their exact value inside the file.
std::string sanitize_component(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            out.push_back(c);
        } else {
            out.push_back('_');
        }
    }
    return out.empty() ? "_" : out;
}

}  // namespace

std::string cache_path(const std::string& results_dir, const RunKey& key) {
    fs::path p = fs::path(results_dir) / sanitize_component(key.model) /
                 paradigm_name(key.paradigm) / dataset_name(key.dataset) /
                 (sanitize_component(key.task_id) + ".json");
    return p.string();
}

void save_record_atomic(const std::string& results_dir, const RunRecord& r) {
    const fs::path path = cache_path(results_dir, key_of(r));
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << record_to_json(r).dump(2) << "\n";
        if (!out) {
            throw std::runtime_error("cache write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);  // atomic within the same directory
}

std::optional<RunRecord> load_cached_record(const std::string& results_dir, const RunKey& key) {
    const fs::path path = cache_path(results_dir, key);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    try {
        return record_from_json(j);
    } catch (const std::exception&) {
        return std::nullopt;  // corrupt cache entry: caller re-runs the cell
    }
}

RunMatrix load_matrix(const std::string& results_dir) {
    RunMatrix m;
    if (!fs::exists(results_dir)) return m;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path& p = entry.path();
        if (p.extension() != ".json") continue;
        if (p.filename() == "run_report.json") continue;
        // cache files live exactly at model/paradigm/dataset depth
        std::ifstream in(p, std::ios::binary);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("task_id")) continue;
        try {
            m.insert(record_from_json(j));
        } catch (const std::exception&) {
            continue;
        }
    }
    return m;
}

void save_matrix(const std::string& results_dir, const RunMatrix& m) {
    for (const RunRecord* r : m.all()) save_record_atomic(results_dir, *r);
}

// ---------------------------------------------------------------------------
// Dataset input

Task task_from_json(const json& j, std::optional<DatasetId> dataset) {
    Task t;
    t.id = j.value("id", "");
    t.dataset = dataset;
    t.prompt = j.contains("question") ? j.value("question", "") : j.value("prompt", "");
    t.reference = j.contains("answer") ? j.value("answer", "") : j.value("reference", "");
    if (j.contains("choices")) {
        for (const auto& c : j.at("choices")) {
            if (c.is_string()) t.choices.push_back(c.get<std::string>());
        }
    }
    if (j.contains("metadata") && j.at("metadata").is_object()) {
        for (const auto& [k, v] : j.at("metadata").items()) {
            t.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    if (t.id.empty()) throw std::runtime_error("task id is empty");
    if (t.prompt.empty()) throw std::runtime_error("task prompt is empty (id " + t.id + ")");
    return t;
}

std::vector<Task> load_tasks_jsonl(const std::string& path, DatasetId dataset) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("dataset file not readable: " + path);
    }
    std::vector<Task> tasks;
    std::set<std::string> seen;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed JSON");
        }
        Task t = task_from_json(j, dataset);
        if (!seen.insert(t.id).second) {
            throw std::runtime_error(path + ": duplicate task id " + t.id);
        }
        tasks.push_back(std::move(t));
    }
    return tasks;
}

void shuffle_for_dataset(std::vector<Task>& tasks, DatasetId dataset, uint64_t seed) {
    std::sort(tasks.begin(), tasks.end(),
              [](const Task& a, const Task& b) { return a.id < b.id; });
    uint64_t stream = fnv1a64(dataset_name(dataset), fnv1a64(std::to_string(seed)));
    deterministic_shuffle(tasks, stream);
}

std::vector<Task> select_tasks(DatasetId dataset, const std::vector<Task>& all_tasks,
                               std::optional<size_t> n, uint64_t seed) {
    if (n && *n > all_tasks.size()) {
        throw std::invalid_argument("requested " + std::to_string(*n) + " tasks but only " +
                                    std::to_string(all_tasks.size()) + " available");
    }
    std::vector<Task> tasks = all_tasks;
    shuffle_for_dataset(tasks, dataset, seed);
    if (n && *n < tasks.size()) tasks.resize(*n);
    return tasks;
}

// ---------------------------------------------------------------------------
// Execution

RunRecord execute_cell(const std::string& model, ParadigmId paradigm, DatasetId dataset,
                       const Task& task, RunEnv& env) {
    ExecContext ctx;
    ctx.backend = env.backend;
    ctx.tools = env.tools;
    ctx.config = env.config;
    ctx.model = model;

    ParadigmOutcome outcome = run_paradigm(paradigm, task, ctx);

    Task eval_task = task;
    if (dataset == DatasetId::HLE && !eval_task.metadata.count("judge_model")) {
        eval_task.metadata["judge_model"] = model;
    }
    EvalVerdict verdict = evaluate(dataset, EvalInputs{outcome.answer, outcome.final_response},
                                   eval_task, env.backend, env.eval_sandbox.get());

    RunRecord r;
    r.model = model;
    r.paradigm = paradigm;
    r.dataset = dataset;
    r.task_id = task.id;
    r.success = verdict.success;
    r.answer = outcome.answer;
    r.reference = task.reference;
    r.trace = std::move(outcome.trace);
    for (const auto& e : r.trace) {
        r.wall_ms += e.elapsed_ms;
        if (e.kind == StepEvent::Kind::LlmCall) {
            ++r.llm_calls;
            r.tokens_total += e.tokens_in + e.tokens_out;
        } else if (e.kind == StepEvent::Kind::ToolCall) {
            ++r.tool_calls;
        }
    }
    r.created_at = now_iso8601_utc();
    return r;
}

RunMatrix run_matrix(const RunPlan& plan, RunEnv& env, RunReport* report) {
    if (plan.results_dir.empty()) {
        throw std::invalid_argument("results_dir is required");
    }
    fs::create_directories(plan.results_dir);

    struct Cell {
        std::string model;
        ParadigmId paradigm;
        DatasetId dataset;
        const Task* task;
    };
    std::vector<Cell> cells;
    for (const auto& model : plan.models) {
        for (ParadigmId paradigm : plan.paradigms) {
            for (DatasetId dataset : plan.datasets) {
                auto it = env.tasks.find(dataset);
                if (it == env.tasks.end()) continue;
                for (const Task& task : it->second) {
                    if (!plan.task_ids.empty() &&
                        std::find(plan.task_ids.begin(), plan.task_ids.end(), task.id) ==
                            plan.task_ids.end()) {
                        continue;
                    }
                    cells.push_back(Cell{model, paradigm, dataset, &task});
                }
            }
        }
    }

    RunMatrix matrix;
    RunReport local_report;
    std::mutex mu;  // guards matrix + report + fatal
    std::atomic<size_t> next{0};
    std::exception_ptr fatal;  // config-level errors abort the whole run

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            {
                std::lock_guard lock(mu);
                if (fatal) return;
            }
            const Cell& cell = cells[i];
            RunKey key{cell.model, cell.paradigm, cell.dataset, cell.task->id};
            if (auto cached = load_cached_record(plan.results_dir, key)) {
                std::lock_guard lock(mu);
                matrix.insert(std::move(*cached));
                ++local_report.cached;
                continue;
            }
            try {
                RunRecord r =
                    execute_cell(cell.model, cell.paradigm, cell.dataset, *cell.task, env);
                save_record_atomic(plan.results_dir, r);
                std::lock_guard lock(mu);
                matrix.insert(std::move(r));
                ++local_report.executed;
            } catch (const BackendError& e) {
                std::lock_guard lock(mu);
                if (e.kind() == BackendErrorKind::Config) {
                    if (!fatal) fatal = std::current_exception();
                    return;
                }
                local_report.failures.push_back({key, e.what()});
            } catch (const tools::ToolError& e) {
                std::lock_guard lock(mu);
                if (e.kind() == tools::ToolError::Kind::SandboxUnavailable ||
                    e.kind() == tools::ToolError::Kind::Config) {
                    if (!fatal) fatal = std::current_exception();
                    return;
                }
                local_report.failures.push_back({key, e.what()});
            } catch (...) {
                std::lock_guard lock(mu);
                if (!fatal) fatal = std::current_exception();
                return;
            }
        }
    };

    int workers = std::max(1, plan.concurrency);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    if (report) *report = local_report;
    return matrix;
}

void write_run_report(const std::string& results_dir, const RunReport& report) {
    json failures = json::array();
    for (const auto& f : report.failures) {
        failures.push_back(json{{"model", f.key.model},
                                {"paradigm", paradigm_name(f.key.paradigm)},
                                {"dataset", dataset_name(f.key.dataset)},
                                {"task_id", f.key.task_id},
                                {"error", f.error}});
    }
    json j{{"executed", report.executed}, {"cached", report.cached}, {"failures", failures}};
    fs::create_directories(results_dir);
    std::ofstream out(fs::path(results_dir) / "run_report.json", std::ios::trunc);
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Aggregation

SummaryTable summarize(const RunMatrix& matrix) {
    if (matrix.empty()) {
        throw std::invalid_argument("matrix is empty");
    }
    struct Acc {
        size_t n = 0;
        size_t successes = 0;
        double tokens = 0, llm = 0, tool = 0, wall = 0;
    };
    std::map<std::tuple<std::string, ParadigmId, DatasetId>, Acc> cells;
    for (const RunRecord* r : matrix.all()) {
        Acc& a = cells[{r->model, r->paradigm, r->dataset}];
        ++a.n;
        if (r->success) ++a.successes;
        a.tokens += static_cast<double>(r->tokens_total);
        a.llm += static_cast<double>(r->llm_calls);
        a.tool += static_cast<double>(r->tool_calls);
        a.wall += static_cast<double>(r->wall_ms);
    }

    SummaryTable table;
    std::map<std::pair<std::string, ParadigmId>, std::vector<double>> rates;
    for (const auto& [key, a] : cells) {
        const auto& [model, paradigm, dataset] = key;
        SummaryCell cell;
        cell.model = model;
        cell.paradigm = paradigm;
        cell.dataset = dataset;
        cell.n = a.n;
        double n = static_cast<double>(a.n);
        cell.success_rate = 100.0 * static_cast<double>(a.successes) / n;
        cell.mean_tokens = a.tokens / n;
        cell.mean_llm_calls = a.llm / n;
        cell.mean_tool_calls = a.tool / n;
        cell.mean_wall_ms = a.wall / n;
        table.cells.push_back(cell);
        rates[{model, paradigm}].push_back(cell.success_rate);
    }
    for (const auto& [key, values] : rates) {
        SummaryAvg avg;
        avg.model = key.first;
        avg.paradigm = key.second;
        avg.datasets = values.size();
        double sum = 0;
        for (double v : values) sum += v;
        // unweighted mean across the datasets present
        avg.avg_rate = sum / static_cast<double>(values.size());
        table.avgs.push_back(avg);
    }
    return table;
}

std::vector<Table> summary_tables(const SummaryTable& s) {
    Table cells;
    cells.name = "summary";
    cells.columns = {"model", "paradigm",  "dataset",    "n",         "success_rate",
                     "tokens", "llm_calls", "tool_calls", "wall_ms"};
    for (const auto& c : s.cells) {
        cells.rows.push_back({c.model, paradigm_name(c.paradigm), dataset_name(c.dataset),
                              std::to_string(c.n), format_double(c.success_rate),
                              format_double(c.mean_tokens), format_double(c.mean_llm_calls, 2),
                              format_double(c.mean_tool_calls, 2),
                              format_double(c.mean_wall_ms)});
    }
    Table avgs;
    avgs.name = "summary_avg";
    avgs.columns = {"model", "paradigm", "datasets", "avg_success_rate"};
    for (const auto& a : s.avgs) {
        avgs.rows.push_back({a.model, paradigm_name(a.paradigm), std::to_string(a.datasets),
                             format_double(a.avg_rate)});
    }
    return {cells, avgs};
}

std::map<ParadigmId, double> cost_tiers(const RunMatrix& matrix, ParadigmId baseline) {
    // tokens keyed by (model, dataset, task) per paradigm
    std::map<ParadigmId, std::map<std::string, int64_t>> tokens;
    for (const RunRecord* r : matrix.all()) {
        tokens[r->paradigm][r->model + "\x1f" + dataset_name(r->dataset) + "\x1f" + r->task_id] =
            r->tokens_total;
    }
    auto base_it = tokens.find(baseline);
    if (base_it == tokens.end() || base_it->second.empty()) {
        throw std::invalid_argument("baseline paradigm has no records");
    }
    std::map<ParadigmId, double> tiers;
    for (const auto& [paradigm, by_task] : tokens) {
        double sum_p = 0, sum_base = 0;
        size_t shared = 0;
        for (const auto& [task_key, tok] : by_task) {
            auto it = base_it->second.find(task_key);
            if (it == base_it->second.end()) continue;
            sum_p += static_cast<double>(tok);
            sum_base += static_cast<double>(it->second);
            ++shared;
        }
        if (shared == 0 || sum_base == 0) {
            throw std::invalid_argument("baseline lacks shared records for paradigm " +
                                        paradigm_name(paradigm));
        }
        tiers[paradigm] = sum_p / sum_base;
    }
    return tiers;
}

Table cost_tier_table(const std::map<ParadigmId, double>& tiers, ParadigmId baseline) {
    Table t;
    t.name = "cost_tiers";
    t.columns = {"paradigm", "token_multiplier_vs_" + paradigm_name(baseline)};
    for (ParadigmId p : all_paradigms()) {
        auto it = tiers.find(p);
        if (it == tiers.end()) continue;
        t.rows.push_back({paradigm_name(p), format_double(it->second, 2)});
    }
    return t;
}

}  // namespace pb
