#pragma once
// Operator-facing operations behind the C API: run, analyze, train-router,
// route, selfroute. Owns backend/tool wiring from a single configuration.

#include <nlohmann/json.hpp>

#include <memory>
#include <string>

#include "pb/backend.hpp"
#include "pb/paradigms.hpp"
#include "pb/runner.hpp"
#include "pb/tools.hpp"

namespace pb {

// Exit-code mapping shared by the C API and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;  // some cells failed; report written
inline constexpr int kExitConfig = 2;

struct EngineResult {
    std::string output;
    int exit_code = kExitOk;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct EngineConfig {
    std::string workdir = ".";
    std::string results_dir = "results";
    std::string data_dir = "datasets";
    std::string backend_mode = "scripted";  // live | scripted | replay | record
    std::string record_source = "live";     // backend wrapped by record mode
    std::string script_path;                // scripted backend programming
    std::string replay_log;                 // chat/embed exchange log
    std::string tool_log;                   // tool result log
    std::string search_fixture;             // fixture search provider file
    std::string prompts_dir;                // template overrides
    std::string embed_cache;                // embedding cache file
    int concurrency = 1;
    std::string exec_cmd;                   // defaults to PB_EXEC_CMD / python3
    double exec_timeout_s = 0;              // 0: PB_EXEC_TIMEOUT_S / 30
    int embedding_dim = 1536;

    static EngineConfig from_json(const nlohmann::json& j);
};

class Engine {
  public:
    explicit Engine(EngineConfig config);

    EngineResult run(const nlohmann::json& opts);
    EngineResult analyze(const nlohmann::json& opts);
    EngineResult train_router(const nlohmann::json& opts);
    EngineResult route(const nlohmann::json& opts);
    EngineResult selfroute(const nlohmann::json& opts);

    const EngineConfig& config() const { return config_; }

    // exposed for in-process reuse (tests)
    std::shared_ptr<Backend> make_backend();
    std::shared_ptr<tools::Registry> make_tools();
    std::shared_ptr<tools::CodeSandbox> make_sandbox() const;

  private:
    std::string resolve(const std::string& path) const;
    ParadigmConfig paradigm_config() const;
    std::vector<Task> tasks_for_matrix(const RunMatrix& matrix, const std::string& model) const;

    EngineConfig config_;
};

}  // namespace pb
