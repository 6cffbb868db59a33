#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pb/runner.hpp"
#include "pb/util.hpp"

using namespace pb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        char tmpl[] = "/tmp/pb_runner_XXXXXX";
        path = mkdtemp(tmpl);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::vector<Task> make_tasks(DatasetId dataset, int n, const std::string& prefix = "t") {
    std::vector<Task> tasks;
    for (int i = 0; i < n; ++i) {
        Task t;
        t.id = prefix + std::to_string(i);
        t.dataset = dataset;
        t.prompt = "question " + std::to_string(i);
        t.reference = "paris";
        tasks.push_back(std::move(t));
    }
    return tasks;
}

std::set<std::string> ids_of(const std::vector<Task>& tasks) {
    std::set<std::string> out;
    for (const auto& t : tasks) out.insert(t.id);
    return out;
}

RunEnv scripted_env(std::shared_ptr<ScriptedBackend> backend) {
    RunEnv env;
    env.backend = backend.get();
    tools::RegistryConfig cfg;
    cfg.search = std::make_shared<tools::FixtureSearchProvider>(
        std::map<std::string, std::vector<tools::SearchHit>>{});
    cfg.sandbox = tools::CodeSandbox("python3", 10.0);
    env.tools = tools::make_default_registry(std::move(cfg));
    env.eval_sandbox = std::make_shared<tools::CodeSandbox>("python3", 30.0);
    return env;
}

RunRecord fixture_record(const std::string& model, ParadigmId p, DatasetId d,
                         const std::string& task, bool success, int64_t tokens) {
    RunRecord r;
    r.model = model;
    r.paradigm = p;
    r.dataset = d;
    r.task_id = task;
    r.success = success;
    r.answer = "a";
    r.reference = "a";
    StepEvent e;
    e.kind = StepEvent::Kind::LlmCall;
    e.request = "req";
    e.response = "resp";
    e.tokens_in = tokens / 2;
    e.tokens_out = tokens - tokens / 2;
    e.elapsed_ms = 3;
    r.trace = {e};
    r.tokens_total = tokens;
    r.llm_calls = 1;
    r.wall_ms = 3;
    r.created_at = "2026-01-01T00:00:00Z";
    return r;
}

}  // namespace

TEST_CASE("select_tasks with n=all returns the same set, shuffled deterministically") {
    auto tasks = make_tasks(DatasetId::NQ, 20);
    auto a = select_tasks(DatasetId::NQ, tasks, std::nullopt, 42);
    auto b = select_tasks(DatasetId::NQ, tasks, std::nullopt, 42);
    CHECK(a.size() == tasks.size());
    CHECK(ids_of(a) == ids_of(tasks));
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
}

TEST_CASE("select_tasks is independent of input order") {
    auto tasks = make_tasks(DatasetId::NQ, 50);
    auto reversed = tasks;
    std::reverse(reversed.begin(), reversed.end());
    auto a = select_tasks(DatasetId::NQ, tasks, 10, 42);
    auto b = select_tasks(DatasetId::NQ, reversed, 10, 42);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
}

TEST_CASE("select_tasks differs across seeds and errors when n exceeds the pool") {
    auto tasks = make_tasks(DatasetId::NQ, 100);
    auto s42 = select_tasks(DatasetId::NQ, tasks, 10, 42);
    auto s43 = select_tasks(DatasetId::NQ, tasks, 10, 43);
    CHECK(ids_of(s42) != ids_of(s43));
    CHECK_THROWS_AS(select_tasks(DatasetId::NQ, tasks, 101, 42), std::invalid_argument);
}

TEST_CASE("select_tasks keys the shuffle by dataset id") {
    auto tasks = make_tasks(DatasetId::NQ, 40);
    auto as_nq = select_tasks(DatasetId::NQ, tasks, 40, 42);
    auto as_mmlu = select_tasks(DatasetId::MMLU, tasks, 40, 42);
    bool same_order = true;
    for (size_t i = 0; i < as_nq.size(); ++i) {
        if (as_nq[i].id != as_mmlu[i].id) same_order = false;
    }
    CHECK(!same_order);
}

TEST_CASE("record JSON round-trip preserves every field") {
    RunRecord r = fixture_record("m", ParadigmId::ReAct, DatasetId::GAIA, "g1", true, 321);
    StepEvent tool;
    tool.kind = StepEvent::Kind::ToolCall;
    tool.tool = "web_search";
    tool.request = "query";
    tool.response = "no results";
    tool.elapsed_ms = 1;
    r.trace.push_back(tool);
    r.tool_calls = 1;

    RunRecord back = record_from_json(record_to_json(r));
    CHECK(back == r);
}

TEST_CASE("cache files live under model/paradigm/dataset and survive odd task ids") {
    TempDir dir;
    RunRecord r = fixture_record("demo", ParadigmId::Direct, DatasetId::HumanEval,
                                 "HumanEval/0", true, 10);
    save_record_atomic(dir.str(), r);
    // path component is sanitized; the record content keeps the exact id
    auto cached = load_cached_record(dir.str(), key_of(r));
    REQUIRE(cached.has_value());
    CHECK(cached->task_id == "HumanEval/0");
    CHECK(fs::exists(fs::path(dir.str()) / "demo" / "direct" / "humaneval" /
                     "HumanEval_0.json"));
}

TEST_CASE("matrix save/load round-trips, trace and created_at included") {
    TempDir dir;
    RunMatrix m;
    m.insert(fixture_record("m1", ParadigmId::Direct, DatasetId::NQ, "a", true, 100));
    m.insert(fixture_record("m1", ParadigmId::CoT, DatasetId::NQ, "a", false, 200));
    m.insert(fixture_record("m2", ParadigmId::ReCode, DatasetId::MATH500, "b", true, 300));
    save_matrix(dir.str(), m);
    RunMatrix loaded = load_matrix(dir.str());
    CHECK(loaded == m);
}

TEST_CASE("run_matrix executes fresh cells, then serves them from cache") {
    TempDir dir;
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add_rule("question", "\\boxed{paris}");
    RunEnv env = scripted_env(backend);
    env.tasks[DatasetId::NQ] = make_tasks(DatasetId::NQ, 2);

    RunPlan plan;
    plan.models = {"demo"};
    plan.paradigms = {ParadigmId::Direct};
    plan.datasets = {DatasetId::NQ};
    plan.results_dir = dir.str();

    RunReport report;
    RunMatrix matrix = run_matrix(plan, env, &report);
    CHECK(matrix.size() == 2);
    CHECK(report.executed == 2);
    CHECK(report.cached == 0);
    CHECK(backend->chat_calls() == 2);
    CHECK(matrix.find(RunKey{"demo", ParadigmId::Direct, DatasetId::NQ, "t0"})->success);

    // exactly two cache files on disk
    int files = 0;
    for (auto& e : fs::recursive_directory_iterator(dir.str())) {
        if (e.is_regular_file() && e.path().extension() == ".json") ++files;
    }
    CHECK(files == 2);

    // immediate re-run: zero backend calls
    RunReport second;
    RunMatrix again = run_matrix(plan, env, &second);
    CHECK(second.executed == 0);
    CHECK(second.cached == 2);
    CHECK(backend->chat_calls() == 2);
    CHECK(again.size() == 2);

    // corrupt one cache file: exactly one re-execution
    std::ofstream(cache_path(dir.str(), RunKey{"demo", ParadigmId::Direct, DatasetId::NQ, "t0"}),
                  std::ios::trunc)
        << "{ not json";
    RunReport third;
    run_matrix(plan, env, &third);
    CHECK(third.executed == 1);
    CHECK(third.cached == 1);
    CHECK(backend->chat_calls() == 3);
}

TEST_CASE("run_matrix skips failing cells, reports them, and can resume") {
    TempDir dir;
    auto backend = std::make_shared<ScriptedBackend>();
    // no rules, no default: every chat throws ScriptExhausted (transport-class)
    RunEnv env = scripted_env(backend);
    env.tasks[DatasetId::NQ] = make_tasks(DatasetId::NQ, 2);

    RunPlan plan;
    plan.models = {"demo"};
    plan.paradigms = {ParadigmId::Direct};
    plan.datasets = {DatasetId::NQ};
    plan.results_dir = dir.str();

    RunReport report;
    RunMatrix matrix = run_matrix(plan, env, &report);
    CHECK(matrix.empty());
    CHECK(report.failures.size() == 2);
    write_run_report(dir.str(), report);
    CHECK(fs::exists(fs::path(dir.str()) / "run_report.json"));

    // now program the backend and resume: both cells execute
    backend->set_default_response("\\boxed{paris}");
    RunReport resumed;
    RunMatrix fixed = run_matrix(plan, env, &resumed);
    CHECK(fixed.size() == 2);
    CHECK(resumed.executed == 2);
    CHECK(resumed.failures.empty());
}

TEST_CASE("concurrency does not change record content") {
    auto run_with = [](int concurrency, const std::string& dir) {
        auto backend = std::make_shared<ScriptedBackend>();
        backend->add_rule("question", "\\boxed{paris}");
        RunEnv env = scripted_env(backend);
        env.tasks[DatasetId::NQ] = make_tasks(DatasetId::NQ, 6);
        RunPlan plan;
        plan.models = {"demo"};
        plan.paradigms = {ParadigmId::Direct, ParadigmId::CoT};
        plan.datasets = {DatasetId::NQ};
        plan.results_dir = dir;
        plan.concurrency = concurrency;
        return run_matrix(plan, env, nullptr);
    };
    TempDir d1, d4;
    RunMatrix serial = run_with(1, d1.str());
    RunMatrix parallel = run_with(4, d4.str());
    REQUIRE(serial.size() == parallel.size());
    for (const RunRecord* r : serial.all()) {
        const RunRecord* other = parallel.find(key_of(*r));
        REQUIRE(other != nullptr);
        CHECK(r->equal_ignoring_created_at(*other));
    }
}

TEST_CASE("summarize computes rates, means and the unweighted Avg") {
    RunMatrix m;
    // one cell with 1 success of 2
    m.insert(fixture_record("demo", ParadigmId::Direct, DatasetId::NQ, "a", true, 100));
    m.insert(fixture_record("demo", ParadigmId::Direct, DatasetId::NQ, "b", false, 300));
    // a second dataset present only for Direct
    m.insert(fixture_record("demo", ParadigmId::Direct, DatasetId::MMLU, "c", true, 100));
    // CoT has records on a single dataset: its Avg must ignore the empty slice
    m.insert(fixture_record("demo", ParadigmId::CoT, DatasetId::NQ, "a", true, 50));

    SummaryTable s = summarize(m);
    bool saw_nq_direct = false;
    for (const auto& cell : s.cells) {
        if (cell.paradigm == ParadigmId::Direct && cell.dataset == DatasetId::NQ) {
            saw_nq_direct = true;
            CHECK(cell.n == 2);
            CHECK(cell.success_rate == doctest::Approx(50.0));
            CHECK(cell.mean_tokens == doctest::Approx(200.0));
        }
    }
    CHECK(saw_nq_direct);
    for (const auto& avg : s.avgs) {
        if (avg.paradigm == ParadigmId::Direct) {
            CHECK(avg.datasets == 2);
            CHECK(avg.avg_rate == doctest::Approx((50.0 + 100.0) / 2.0));
        }
        if (avg.paradigm == ParadigmId::CoT) {
            CHECK(avg.datasets == 1);  // empty slices excluded from the denominator
            CHECK(avg.avg_rate == doctest::Approx(100.0));
        }
    }
    CHECK_THROWS_AS(summarize(RunMatrix{}), std::invalid_argument);
}

TEST_CASE("cost tiers divide mean tokens over shared tasks") {
    RunMatrix m;
    for (int i = 0; i < 5; ++i) {
        const std::string id = "t" + std::to_string(i);
        m.insert(fixture_record("demo", ParadigmId::Direct, DatasetId::NQ, id, true, 1000));
        m.insert(fixture_record("demo", ParadigmId::ReAct, DatasetId::NQ, id, true, 2000));
    }
    auto tiers = cost_tiers(m, ParadigmId::Direct);
    CHECK(tiers.at(ParadigmId::Direct) == doctest::Approx(1.0));
    CHECK(tiers.at(ParadigmId::ReAct) == doctest::Approx(2.0));

    RunMatrix no_baseline;
    no_baseline.insert(fixture_record("demo", ParadigmId::ReAct, DatasetId::NQ, "x", true, 10));
    CHECK_THROWS_AS(cost_tiers(no_baseline, ParadigmId::Direct), std::invalid_argument);
}

TEST_CASE("task JSONL loader validates ids, prompts and duplicates") {
    TempDir dir;
    const std::string path = (dir.path / "tasks.jsonl").string();
    {
        std::ofstream out(path);
        out << R"({"id":"a","question":"q1","answer":"1"})" << "\n";
        out << R"({"id":"b","question":"q2","answer":"2","choices":["x","y"],"metadata":{"k":"v"}})"
            << "\n";
    }
    auto tasks = load_tasks_jsonl(path, DatasetId::MMLU);
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].prompt == "q1");
    CHECK(tasks[1].choices.size() == 2);
    CHECK(tasks[1].metadata.at("k") == "v");
    CHECK(tasks[1].dataset == DatasetId::MMLU);

    {
        std::ofstream out(path, std::ios::app);
        out << R"({"id":"a","question":"dup","answer":"3"})" << "\n";
    }
    CHECK_THROWS(load_tasks_jsonl(path, DatasetId::MMLU));
    CHECK_THROWS(load_tasks_jsonl((dir.path / "missing.jsonl").string(), DatasetId::MMLU));
}
