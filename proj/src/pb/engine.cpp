#include "pb/engine.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "pb/analytics.hpp"
#include "pb/evalkit.hpp"
#include "pb/router.hpp"
#include "pb/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace pb {

namespace {

std::string get_string(const json& j, const char* key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_string()) return v.get<std::string>();
    throw ConfigError(std::string("option '") + key + "' must be a string");
}

ReportFormat format_of(const json& opts) {
    try {
        return parse_report_format(get_string(opts, "format", "text"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    const auto& v = j.at(key);
    if (v.is_string()) {
        for (const auto& s : split(v.get<std::string>(), ',')) {
            std::string t = trim(s);
            if (!t.empty()) out.push_back(t);
        }
    } else if (v.is_array()) {
        for (const auto& s : v) out.push_back(s.get<std::string>());
    }
    return out;
}

}  // namespace

EngineConfig EngineConfig::from_json(const json& j) {
    EngineConfig cfg;
    if (!j.is_object()) throw ConfigError("engine config must be a JSON object");
    cfg.workdir = get_string(j, "workdir", cfg.workdir);
    cfg.results_dir = get_string(j, "results_dir", cfg.results_dir);
    cfg.data_dir = get_string(j, "data_dir", cfg.data_dir);
    cfg.backend_mode = get_string(j, "backend", cfg.backend_mode);
    cfg.record_source = get_string(j, "record_source", cfg.record_source);
    cfg.script_path = get_string(j, "script", "");
    cfg.replay_log = get_string(j, "replay_log", "");
    cfg.tool_log = get_string(j, "tool_log", "");
    cfg.search_fixture = get_string(j, "search_fixture", "");
    cfg.prompts_dir = get_string(j, "prompts_dir", "");
    cfg.embed_cache = get_string(j, "embed_cache", "");
    cfg.concurrency = j.value("concurrency", 1);
    cfg.exec_cmd = get_string(j, "exec_cmd", "");
    cfg.exec_timeout_s = j.value("exec_timeout_s", 0.0);
    cfg.embedding_dim = j.value("embedding_dim", 1536);
    if (cfg.concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (cfg.embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
    static const std::set<std::string> modes = {"live", "scripted", "replay", "record"};
    if (!modes.count(cfg.backend_mode)) {
        throw ConfigError("backend must be one of live, scripted, replay, record");
    }
    return cfg;
}

Engine::Engine(EngineConfig config) : config_(std::move(config)) {}

std::string Engine::resolve(const std::string& path) const {
    if (path.empty()) return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(config_.workdir) / p).string();
}

std::shared_ptr<Backend> Engine::make_backend() {
    auto make_scripted = [&]() -> std::shared_ptr<Backend> {
        auto scripted = std::make_shared<ScriptedBackend>(config_.embedding_dim);
        if (!config_.script_path.empty()) {
            std::ifstream in(resolve(config_.script_path));
            if (!in) throw ConfigError("script file not readable: " + config_.script_path);
            json j = json::parse(in, nullptr, false);
            if (j.is_discarded()) throw ConfigError("script file is not valid JSON");
            for (const auto& r : j.value("queue", json::array())) {
                scripted->push_response(r.get<std::string>());
            }
            for (const auto& r : j.value("rules", json::array())) {
                scripted->add_rule(r.at("pattern").get<std::string>(),
                                   r.at("response").get<std::string>());
            }
            if (j.contains("default")) {
                scripted->set_default_response(j.at("default").get<std::string>());
            }
        } else {
            scripted->set_default_response("\\boxed{0}");
        }
        return scripted;
    };

    const std::string replay_log =
        config_.replay_log.empty() ? (resolve(config_.results_dir) + "/replay_log.jsonl")
                                   : resolve(config_.replay_log);
    try {
        if (config_.backend_mode == "scripted") return make_scripted();
        if (config_.backend_mode == "replay") return std::make_shared<ReplayBackend>(replay_log);
        if (config_.backend_mode == "live") {
            return std::make_shared<LiveBackend>(live_config_from_env());
        }
        // record
        std::shared_ptr<Backend> inner;
        if (config_.record_source == "scripted") {
            inner = make_scripted();
        } else if (config_.record_source == "live") {
            inner = std::make_shared<LiveBackend>(live_config_from_env());
        } else {
            throw ConfigError("record_source must be live or scripted");
        }
        fs::create_directories(fs::path(replay_log).parent_path());
        LiveConfig live = live_config_from_env();
        return std::make_shared<RecordingBackend>(inner, replay_log, live.embed_model);
    } catch (const BackendError& e) {
        throw ConfigError(e.what());
    }
}

std::shared_ptr<tools::Registry> Engine::make_tools() {
    tools::RegistryConfig cfg;
    if (!config_.search_fixture.empty()) {
        cfg.search = std::make_shared<tools::FixtureSearchProvider>(resolve(config_.search_fixture));
    } else if (const char* base = std::getenv("PB_SEARCH_BASE"); base && *base) {
        const char* key = std::getenv("PB_SEARCH_KEY");
        cfg.search = std::make_shared<tools::LiveSearchProvider>(base, key ? key : "");
    } else {
        cfg.search = std::make_shared<tools::FixtureSearchProvider>(
            std::map<std::string, std::vector<tools::SearchHit>>{});
    }
    cfg.sandbox = *make_sandbox();
    const std::string tool_log = config_.tool_log.empty()
                                     ? (resolve(config_.results_dir) + "/tool_log.jsonl")
                                     : resolve(config_.tool_log);
    if (config_.backend_mode == "record") {
        fs::create_directories(fs::path(tool_log).parent_path());
        cfg.record_log = tool_log;
    } else if (config_.backend_mode == "replay" && fs::exists(tool_log)) {
        cfg.replay_log = tool_log;
    }
    try {
        return tools::make_default_registry(std::move(cfg));
    } catch (const tools::ToolError& e) {
        throw ConfigError(e.what());
    }
}

std::shared_ptr<tools::CodeSandbox> Engine::make_sandbox() const {
    tools::CodeSandbox base = tools::sandbox_from_env();
    return std::make_shared<tools::CodeSandbox>(
        config_.exec_cmd.empty() ? base.interpreter_cmd() : config_.exec_cmd,
        config_.exec_timeout_s > 0 ? config_.exec_timeout_s : base.timeout_s());
}

ParadigmConfig Engine::paradigm_config() const {
    ParadigmConfig cfg;
    if (!config_.prompts_dir.empty()) {
        cfg.prompts = PromptSet::from_dir(resolve(config_.prompts_dir));
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// run

EngineResult Engine::run(const json& opts) {
    RunPlan plan;
    plan.models = string_list(opts, "models");
    if (plan.models.empty()) throw ConfigError("run requires --models");

    std::vector<std::string> paradigm_names = string_list(opts, "paradigms");
    if (paradigm_names.empty() || (paradigm_names.size() == 1 && paradigm_names[0] == "all")) {
        plan.paradigms = all_paradigms();
    } else {
        for (const auto& name : paradigm_names) {
            auto p = parse_paradigm(name);
            if (!p) throw ConfigError("unknown paradigm: " + name);
            plan.paradigms.push_back(*p);
        }
    }
    std::vector<std::string> dataset_names = string_list(opts, "datasets");
    if (dataset_names.empty() || (dataset_names.size() == 1 && dataset_names[0] == "all")) {
        plan.datasets = all_datasets();
    } else {
        for (const auto& name : dataset_names) {
            auto d = parse_dataset(name);
            if (!d) throw ConfigError("unknown dataset: " + name);
            plan.datasets.push_back(*d);
        }
    }
    plan.seed = opts.value("seed", uint64_t{42});
    if (opts.contains("n") && !opts.at("n").is_null()) {
        if (opts.at("n").is_number_integer()) {
            plan.task_count = opts.at("n").get<size_t>();
        } else if (opts.at("n").is_string() && opts.at("n").get<std::string>() != "all") {
            throw ConfigError("n must be an integer or \"all\"");
        }
    }
    plan.task_ids = string_list(opts, "task_ids");
    plan.results_dir = resolve(config_.results_dir);
    plan.concurrency = config_.concurrency;

    RunEnv env;
    auto backend = make_backend();
    env.backend = backend.get();
    env.tools = make_tools();
    env.config = paradigm_config();
    env.eval_sandbox = make_sandbox();

    for (DatasetId dataset : plan.datasets) {
        const std::string path =
            (fs::path(resolve(config_.data_dir)) / (dataset_name(dataset) + ".jsonl")).string();
        std::vector<Task> all_tasks;
        try {
            all_tasks = load_tasks_jsonl(path, dataset);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        try {
            env.tasks[dataset] = select_tasks(dataset, all_tasks, plan.task_count, plan.seed);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string(e.what()) + " (dataset " + dataset_name(dataset) + ")");
        }
    }

    RunReport report;
    RunMatrix matrix = run_matrix(plan, env, &report);
    write_run_report(plan.results_dir, report);

    std::string out = std::to_string(report.cached) + " cached, " +
                      std::to_string(report.executed) + " executed, " +
                      std::to_string(report.failures.size()) + " failed\n";
    if (!matrix.empty()) {
        out += "\n" + render_tables(summary_tables(summarize(matrix)), format_of(opts));
    }
    for (const auto& f : report.failures) {
        out += "failed: " + f.key.to_string() + ": " + f.error + "\n";
    }
    return EngineResult{out, report.failures.empty() ? kExitOk : kExitPartial};
}

// ---------------------------------------------------------------------------
// analyze

EngineResult Engine::analyze(const json& opts) {
    RunMatrix matrix = load_matrix(resolve(config_.results_dir));
    if (matrix.empty()) {
        throw ConfigError("no records under " + resolve(config_.results_dir));
    }
    const ReportFormat format = format_of(opts);
    const std::string subset_name = get_string(opts, "oracle_subset", "all");
    std::vector<ParadigmId> subset = all_paradigms();
    if (subset_name == "no-direct") {
        subset.erase(std::remove(subset.begin(), subset.end(), ParadigmId::Direct), subset.end());
    } else if (subset_name != "all") {
        throw ConfigError("oracle_subset must be 'all' or 'no-direct'");
    }

    std::vector<Table> tables = summary_tables(summarize(matrix));

    std::vector<OracleReport> reports;
    for (const std::string& model : matrix.models()) {
        OracleReport r = oracle_report(matrix, model);
        if (subset_name == "no-direct") {
            r.subset_used = subset;
            r.oracle_rate = oracle_rate(matrix, model, subset);
            r.oracle_gap = r.oracle_rate - r.best_single_rate;
        }
        reports.push_back(std::move(r));
    }
    tables.push_back(oracle_report_table(reports));
    tables.push_back(jaccard_table(matrix, ""));

    try {
        tables.push_back(cost_tier_table(cost_tiers(matrix, ParadigmId::Direct),
                                         ParadigmId::Direct));
    } catch (const std::invalid_argument& e) {
        Table t;
        t.name = "cost_tiers";
        t.columns = {"note"};
        t.rows.push_back({std::string("unavailable: ") + e.what()});
        tables.push_back(std::move(t));
    }
    return EngineResult{render_tables(tables, format), kExitOk};
}

// ---------------------------------------------------------------------------
// router commands

std::vector<Task> Engine::tasks_for_matrix(const RunMatrix& matrix,
                                           const std::string& model) const {
    std::map<DatasetId, std::map<std::string, Task>> loaded;
    std::vector<Task> out;
    for (const auto& [dataset, task_id] : matrix.tasks_of_model(model)) {
        auto& file_tasks = loaded[dataset];
        if (file_tasks.empty()) {
            const std::string path =
                (fs::path(resolve(config_.data_dir)) / (dataset_name(dataset) + ".jsonl"))
                    .string();
            try {
                for (Task& t : load_tasks_jsonl(path, dataset)) {
                    file_tasks.emplace(t.id, std::move(t));
                }
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
        }
        auto it = file_tasks.find(task_id);
        if (it != file_tasks.end()) out.push_back(it->second);
    }
    return out;
}

EngineResult Engine::train_router(const json& opts) {
    const std::string model_name = get_string(opts, "model", "");
    if (model_name.empty()) throw ConfigError("train-router requires --model");
    auto layout = parse_feature_layout(get_string(opts, "features", "combined"));
    if (!layout) throw ConfigError("features must be handcrafted, embedding or combined");
    const std::string classifier = get_string(opts, "classifier", "lr");
    if (classifier != "lr" && classifier != "mlp") {
        throw ConfigError("classifier must be lr or mlp");
    }
    const uint64_t seed = opts.value("seed", uint64_t{42});
    const double train_frac = opts.value("train_frac", 0.7);
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw ConfigError("train_frac must lie strictly between 0 and 1 "
                          "(train and test may not overlap)");
    }
    const std::string out_path = resolve(get_string(opts, "out", "router_model.json"));

    RunMatrix matrix = load_matrix(resolve(config_.results_dir));
    if (matrix.empty()) throw ConfigError("no records under " + resolve(config_.results_dir));
    std::vector<Task> tasks = tasks_for_matrix(matrix, model_name);
    if (tasks.empty()) throw ConfigError("no tasks with records for model " + model_name);

    auto [train_tasks, test_tasks] = split_stratified(tasks, train_frac, seed);
    LabelSet train_labels = build_labels(matrix, model_name, train_tasks);
    if (train_labels.labeled.size() < 2) {
        throw ConfigError("not enough labeled training examples");
    }

    std::shared_ptr<Backend> backend;
    std::shared_ptr<EmbeddingCache> cache;
    EmbedFn embed_fn;
    if (*layout != FeatureLayout::Handcrafted) {
        backend = make_backend();
        const std::string cache_path = config_.embed_cache.empty()
                                           ? resolve(config_.results_dir) + "/embeddings.jsonl"
                                           : resolve(config_.embed_cache);
        fs::create_directories(fs::path(cache_path).parent_path());
        LiveConfig live = live_config_from_env();
        cache = std::make_shared<EmbeddingCache>(cache_path, live.embed_model);
        embed_fn = [backend, cache](const std::string& text) {
            return cache->get_or_compute(text, *backend);
        };
    }

    const int dims = feature_dims(*layout, config_.embedding_dim);
    Eigen::MatrixXd features(train_labels.labeled.size(), dims);
    std::vector<ParadigmId> labels;
    for (size_t i = 0; i < train_labels.labeled.size(); ++i) {
        features.row(static_cast<Eigen::Index>(i)) =
            task_features(*train_labels.labeled[i].task, *layout, config_.embedding_dim, embed_fn)
                .transpose();
        labels.push_back(train_labels.labeled[i].label);
    }

    RouterModel router;
    try {
        router = classifier == "lr" ? train_lr(features, labels, seed)
                                    : train_mlp(features, labels, seed);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    router.layout = *layout;
    router.embedding_dim = config_.embedding_dim;
    save_router_model(out_path, router);

    const double train_acc =
        downstream_accuracy(router, matrix, model_name, train_tasks, embed_fn);
    const double test_acc = downstream_accuracy(router, matrix, model_name, test_tasks, embed_fn);
    std::vector<ParadigmId> predictions;
    for (const Task& t : test_tasks) predictions.push_back(predict(router, t, embed_fn));

    Table acc;
    acc.name = "router_accuracy";
    acc.columns = {"model", "classifier", "features", "train_tasks", "test_tasks",
                   "labeled",  "unwinnable_train", "train_downstream", "test_downstream"};
    acc.rows.push_back({model_name, classifier, feature_layout_name(*layout),
                        std::to_string(train_tasks.size()), std::to_string(test_tasks.size()),
                        std::to_string(train_labels.labeled.size()),
                        std::to_string(train_labels.unwinnable.size()), format_double(train_acc),
                        format_double(test_acc)});
    std::vector<Table> tables = {acc,
                                 distribution_table(distribution_report(predictions),
                                                    "router_distribution")};
    std::string out = "router model written to " + out_path + "\n\n" +
                      render_tables(tables, format_of(opts));
    return EngineResult{out, kExitOk};
}

EngineResult Engine::route(const json& opts) {
    const std::string model_file = resolve(get_string(opts, "model_file", "router_model.json"));
    const std::string task_file = resolve(get_string(opts, "task", ""));
    if (task_file.empty()) throw ConfigError("route requires --task");
    RouterModel router;
    try {
        router = load_router_model(model_file);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    std::ifstream in(task_file);
    if (!in) throw ConfigError("task file not readable: " + task_file);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("task file is not valid JSON");
    std::optional<DatasetId> dataset;
    if (j.contains("dataset")) dataset = parse_dataset(j.value("dataset", ""));
    Task task;
    try {
        task = task_from_json(j, dataset);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    std::shared_ptr<Backend> backend;
    EmbedFn embed_fn;
    if (router.layout != FeatureLayout::Handcrafted) {
        backend = make_backend();
        embed_fn = [backend](const std::string& text) { return backend->embed(text).values; };
    }
    ParadigmId chosen = predict(router, task, embed_fn);

    json out{{"task_id", task.id}, {"paradigm", paradigm_name(chosen)}};
    if (opts.value("solve", false)) {
        if (!backend) backend = make_backend();
        RunEnv env;
        env.backend = backend.get();
        env.tools = make_tools();
        env.config = paradigm_config();
        env.eval_sandbox = make_sandbox();
        const std::string exec_model = get_string(opts, "model", "router-solve");
        if (dataset && !task.reference.empty()) {
            RunRecord record = execute_cell(exec_model, chosen, *dataset, task, env);
            out["record"] = record_to_json(record);
        } else {
            // no dataset/gold: execute without scoring
            ExecContext ctx;
            ctx.backend = env.backend;
            ctx.tools = env.tools;
            ctx.config = env.config;
            ctx.model = exec_model;
            ParadigmOutcome outcome = run_paradigm(chosen, task, ctx);
            out["answer"] = outcome.answer;
            out["llm_calls"] =
                std::count_if(outcome.trace.begin(), outcome.trace.end(), [](const StepEvent& e) {
                    return e.kind == StepEvent::Kind::LlmCall;
                });
        }
    }
    return EngineResult{out.dump(2) + "\n", kExitOk};
}

EngineResult Engine::selfroute(const json& opts) {
    const std::string model_name = get_string(opts, "model", "");
    if (model_name.empty()) throw ConfigError("selfroute requires --model");
    const uint64_t seed = opts.value("seed", uint64_t{42});

    RunMatrix matrix = load_matrix(resolve(config_.results_dir));
    if (matrix.empty()) throw ConfigError("no records under " + resolve(config_.results_dir));
    std::vector<Task> tasks = tasks_for_matrix(matrix, model_name);
    if (tasks.empty()) throw ConfigError("no tasks with records for model " + model_name);
    auto [train_tasks, test_tasks] = split_stratified(tasks, 0.7, seed);

    auto backend = make_backend();
    std::vector<ParadigmId> predictions;
    size_t correct = 0;
    size_t parse_failures = 0;
    for (const Task& task : test_tasks) {
        SelfRouteResult r = self_route(task, *backend, model_name);
        if (r.parse_failed) ++parse_failures;
        predictions.push_back(r.paradigm);
        const RunRecord* rec =
            matrix.find(RunKey{model_name, r.paradigm, *task.dataset, task.id});
        if (rec && rec->success) ++correct;
    }
    const double accuracy =
        test_tasks.empty() ? 0.0
                           : 100.0 * static_cast<double>(correct) /
                                 static_cast<double>(test_tasks.size());

    Table acc;
    acc.name = "selfroute_accuracy";
    acc.columns = {"model", "test_tasks", "downstream", "parse_failures"};
    acc.rows.push_back({model_name, std::to_string(test_tasks.size()), format_double(accuracy),
                        std::to_string(parse_failures)});
    std::vector<Table> tables = {acc, distribution_table(distribution_report(predictions),
                                                         "selfroute_distribution")};
    return EngineResult{render_tables(tables, format_of(opts)), kExitOk};
}

}  // namespace pb
