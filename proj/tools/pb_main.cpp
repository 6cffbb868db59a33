// pb: command-line front end. Thin argv-to-JSON translation over the C API.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <string>

#include "paradigmbench.h"

using nlohmann::json;

namespace {

struct CommonOpts {
    std::string workdir = ".";
    std::string results_dir = "results";
    std::string data_dir = "datasets";
    std::string backend = "scripted";
    std::string record_source = "live";
    std::string script;
    std::string replay_log;
    std::string tool_log;
    std::string search_fixture;
    std::string prompts_dir;
    std::string embed_cache;
    std::string format = "text";
    int concurrency = 1;
    std::string exec_cmd;
    double exec_timeout_s = 0;
    int embedding_dim = 1536;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--workdir", o.workdir, "Base directory for relative paths");
    cmd->add_option("--results-dir", o.results_dir, "Result cache directory");
    cmd->add_option("--data-dir", o.data_dir, "Directory with <dataset>.jsonl files");
    cmd->add_option("--backend", o.backend, "Backend mode: live, scripted, replay, record")
        ->check(CLI::IsMember({"live", "scripted", "replay", "record"}));
    cmd->add_option("--record-source", o.record_source,
                    "Backend wrapped in record mode (live or scripted)");
    cmd->add_option("--script", o.script, "Scripted backend programming (JSON file)");
    cmd->add_option("--replay-log", o.replay_log, "Chat/embed exchange log (JSONL)");
    cmd->add_option("--tool-log", o.tool_log, "Tool result log (JSONL)");
    cmd->add_option("--search-fixture", o.search_fixture, "Fixture search provider (JSON file)");
    cmd->add_option("--prompts-dir", o.prompts_dir, "Prompt template overrides directory");
    cmd->add_option("--embed-cache", o.embed_cache, "Embedding cache file (JSONL)");
    cmd->add_option("--format", o.format, "Output format: text, csv or json")
        ->check(CLI::IsMember({"text", "csv", "json"}));
    cmd->add_option("--concurrency", o.concurrency, "Parallel cells during run");
    cmd->add_option("--exec-cmd", o.exec_cmd, "Sandbox interpreter command");
    cmd->add_option("--exec-timeout", o.exec_timeout_s, "Sandbox timeout in seconds");
    cmd->add_option("--embedding-dim", o.embedding_dim, "Embedding dimension");
}

json engine_config(const CommonOpts& o) {
    json j{{"workdir", o.workdir},
           {"results_dir", o.results_dir},
           {"data_dir", o.data_dir},
           {"backend", o.backend},
           {"record_source", o.record_source},
           {"concurrency", o.concurrency},
           {"embedding_dim", o.embedding_dim}};
    if (!o.script.empty()) j["script"] = o.script;
    if (!o.replay_log.empty()) j["replay_log"] = o.replay_log;
    if (!o.tool_log.empty()) j["tool_log"] = o.tool_log;
    if (!o.search_fixture.empty()) j["search_fixture"] = o.search_fixture;
    if (!o.prompts_dir.empty()) j["prompts_dir"] = o.prompts_dir;
    if (!o.embed_cache.empty()) j["embed_cache"] = o.embed_cache;
    if (!o.exec_cmd.empty()) j["exec_cmd"] = o.exec_cmd;
    if (o.exec_timeout_s > 0) j["exec_timeout_s"] = o.exec_timeout_s;
    return j;
}

using ApiCall = pb_status (*)(pb_engine*, const char*, char**);

int run_call(const CommonOpts& common, ApiCall call, const json& options) {
    pb_engine* engine = nullptr;
    pb_status status = pb_engine_new(engine_config(common).dump().c_str(), &engine);
    if (status != PB_OK || !engine) {
        std::fprintf(stderr, "error: invalid engine configuration\n");
        return PB_ERR_CONFIG;
    }
    char* report = nullptr;
    status = call(engine, options.dump().c_str(), &report);
    if (report) {
        std::fputs(report, stdout);
        pb_string_free(report);
    }
    if (status != PB_OK && status != PB_ERR_PARTIAL) {
        std::fprintf(stderr, "error: %s\n", pb_engine_last_error(engine));
    }
    pb_engine_free(engine);
    // config-class statuses map onto exit 2, partial failures onto 1
    if (status == PB_ERR_INVALID || status == PB_ERR_NOT_FOUND) return PB_ERR_CONFIG;
    if (status == PB_ERR_RUNTIME) return PB_ERR_CONFIG;
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paradigm benchmark runner and router"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pb_version()));

    // run
    CommonOpts run_common;
    std::string run_models, run_paradigms = "all", run_datasets = "all", run_n = "all";
    std::string run_task_ids;
    uint64_t run_seed = 42;
    auto* cmd_run = app.add_subcommand("run", "Execute the (model x paradigm x dataset) matrix");
    add_common(cmd_run, run_common);
    cmd_run->add_option("--models", run_models, "Comma-separated model names")->required();
    cmd_run->add_option("--paradigms", run_paradigms, "Comma-separated paradigms or 'all'");
    cmd_run->add_option("--datasets", run_datasets, "Comma-separated datasets or 'all'");
    cmd_run->add_option("--n", run_n, "Tasks per dataset (integer or 'all')");
    cmd_run->add_option("--task-ids", run_task_ids, "Comma-separated explicit task ids");
    cmd_run->add_option("--seed", run_seed, "Task selection seed");

    // analyze
    CommonOpts an_common;
    std::string an_subset = "all";
    auto* cmd_analyze = app.add_subcommand("analyze", "Summaries, oracle, Jaccard, cost tiers");
    add_common(cmd_analyze, an_common);
    cmd_analyze->add_option("--oracle-subset", an_subset, "'all' or 'no-direct'")
        ->check(CLI::IsMember({"all", "no-direct"}));

    // train-router
    CommonOpts tr_common;
    std::string tr_model, tr_features = "combined", tr_classifier = "lr";
    std::string tr_out = "router_model.json";
    uint64_t tr_seed = 42;
    double tr_frac = 0.7;
    auto* cmd_train = app.add_subcommand("train-router", "Train the select-then-solve router");
    add_common(cmd_train, tr_common);
    cmd_train->add_option("--model", tr_model, "Model whose records supply the labels")
        ->required();
    cmd_train->add_option("--features", tr_features, "handcrafted, embedding or combined")
        ->check(CLI::IsMember({"handcrafted", "embedding", "combined"}));
    cmd_train->add_option("--classifier", tr_classifier, "lr or mlp")
        ->check(CLI::IsMember({"lr", "mlp"}));
    cmd_train->add_option("--out", tr_out, "Router model output file");
    cmd_train->add_option("--seed", tr_seed, "Split/training seed");
    cmd_train->add_option("--train-frac", tr_frac, "Training fraction of the split");

    // route
    CommonOpts rt_common;
    std::string rt_task, rt_model_file = "router_model.json", rt_model = "router-solve";
    bool rt_solve = false;
    auto* cmd_route = app.add_subcommand("route", "Predict (and optionally run) a paradigm");
    add_common(cmd_route, rt_common);
    cmd_route->add_option("--task", rt_task, "Task file (JSON object)")->required();
    cmd_route->add_option("--model-file", rt_model_file, "Trained router model file");
    cmd_route->add_option("--model", rt_model, "Model name used when solving");
    cmd_route->add_flag("--solve", rt_solve, "Execute the selected paradigm end to end");

    // selfroute
    CommonOpts sr_common;
    std::string sr_model;
    uint64_t sr_seed = 42;
    auto* cmd_self = app.add_subcommand("selfroute", "Zero-shot paradigm self-selection");
    add_common(cmd_self, sr_common);
    cmd_self->add_option("--model", sr_model, "Model that selects its own paradigm")->required();
    cmd_self->add_option("--seed", sr_seed, "Split seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : PB_ERR_CONFIG;
    }

    if (cmd_run->parsed()) {
        json opts{{"models", run_models}, {"paradigms", run_paradigms},
                  {"datasets", run_datasets}, {"seed", run_seed},
                  {"format", run_common.format}};
        if (run_n != "all") {
            try {
                opts["n"] = std::stoul(run_n);
            } catch (const std::exception&) {
                std::fprintf(stderr, "error: --n must be an integer or 'all'\n");
                return PB_ERR_CONFIG;
            }
        }
        if (!run_task_ids.empty()) opts["task_ids"] = run_task_ids;
        return run_call(run_common, &pb_run, opts);
    }
    if (cmd_analyze->parsed()) {
        json opts{{"format", an_common.format}, {"oracle_subset", an_subset}};
        return run_call(an_common, &pb_analyze, opts);
    }
    if (cmd_train->parsed()) {
        json opts{{"model", tr_model},   {"features", tr_features},
                  {"classifier", tr_classifier}, {"out", tr_out},
                  {"seed", tr_seed},     {"train_frac", tr_frac},
                  {"format", tr_common.format}};
        return run_call(tr_common, &pb_train_router, opts);
    }
    if (cmd_route->parsed()) {
        json opts{{"task", rt_task},
                  {"model_file", rt_model_file},
                  {"model", rt_model},
                  {"solve", rt_solve},
                  {"format", rt_common.format}};
        return run_call(rt_common, &pb_route, opts);
    }
    if (cmd_self->parsed()) {
        json opts{{"model", sr_model}, {"seed", sr_seed}, {"format", sr_common.format}};
        return run_call(sr_common, &pb_selfroute, opts);
    }
    return PB_ERR_CONFIG;
}
