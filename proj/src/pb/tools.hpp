#pragma once
// The shared tool repertoire: a web-search tool and a code-execution tool,
// both replayable. Generated programs additionally run through a sandbox with
// a request/response bridge so they can call back into the registry.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pb::tools {

inline constexpr size_t kOutputCap = 8192;  // per tool result, characters
inline constexpr double kDefaultExecTimeoutS = 30.0;
inline constexpr size_t kSearchSnippets = 5;

struct ToolSpec {
    std::string name;
    std::string description;  // inserted into paradigm prompts
    std::string input_schema;
};

struct ToolResult {
    std::string output;
    bool ok = false;
    int64_t elapsed_ms = 0;
    bool truncated = false;
};

class ToolError : public std::runtime_error {
  public:
    enum class Kind { SandboxUnavailable, Provider, ReplayMiss, Config };
    ToolError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

// Caps output at kOutputCap and sets the truncated flag.
void apply_output_cap(ToolResult& r);

// ---------------------------------------------------------------------------
// Code execution sandbox: separate interpreter process, temp working
// directory, scrubbed environment, no network (best effort), hard timeout.

// Serves tool requests issued by a running program through the bridge.
using BridgeHandler = std::function<std::string(const std::string& tool, const std::string& input)>;

class CodeSandbox {
  public:
    explicit CodeSandbox(std::string interpreter_cmd = "python3",
                         double timeout_s = kDefaultExecTimeoutS);

    // Runs the snippet; stdout+stderr captured, killed at the timeout.
    ToolResult run(const std::string& source) const;
    // Same, but with web_search/code_exec shims prepended; shim calls are
    // forwarded to the handler while the program runs.
    ToolResult run_with_bridge(const std::string& source, const BridgeHandler& handler) const;

    double timeout_s() const { return timeout_s_; }
    const std::string& interpreter_cmd() const { return interpreter_cmd_; }

  private:
    ToolResult execute(const std::string& source, const BridgeHandler* handler) const;
    std::string interpreter_cmd_;
    double timeout_s_;
};

// Reads PB_EXEC_CMD and PB_EXEC_TIMEOUT_S.
CodeSandbox sandbox_from_env();

// Python source of the bridge shims (web_search/code_exec primitives).
std::string bridge_shim_source();

// ---------------------------------------------------------------------------
// Web search providers.

struct SearchHit {
    std::string title;
    std::string excerpt;
    std::string url;
};

class SearchProvider {
  public:
    virtual ~SearchProvider() = default;
    // Up to kSearchSnippets hits; an empty list renders as a "no results" text.
    virtual std::vector<SearchHit> search(const std::string& query) = 0;
};

// JSON file: {"query": [{"title":..., "excerpt":..., "url":...}, ...], ...}.
// Unmapped queries return no hits.
class FixtureSearchProvider : public SearchProvider {
  public:
    explicit FixtureSearchProvider(const std::string& fixture_path);
    explicit FixtureSearchProvider(std::map<std::string, std::vector<SearchHit>> entries)
        : entries_(std::move(entries)) {}
    std::vector<SearchHit> search(const std::string& query) override;

  private:
    std::map<std::string, std::vector<SearchHit>> entries_;
};

// GET {base}/search?q=...&k=5 with optional bearer key; response is a JSON
// array of {title, excerpt, url} (or {"results": [...]}).
class LiveSearchProvider : public SearchProvider {
  public:
    LiveSearchProvider(std::string base, std::string key);
    std::vector<SearchHit> search(const std::string& query) override;

  private:
    std::string base_;
    std::string key_;
};

std::string render_search_hits(const std::vector<SearchHit>& hits);

// ---------------------------------------------------------------------------
// Registry: dispatch plus record/replay of tool results.

std::string tool_fingerprint(const std::string& name, const std::string& input);

// Fingerprint-keyed log of tool results (JSON Lines, kind "tool").
class ToolLog {
  public:
    static ToolLog load(const std::string& path);
    std::optional<ToolResult> find(const std::string& fingerprint) const;
    size_t size() const { return entries_.size(); }

  private:
    std::map<std::string, ToolResult> entries_;
};

using ToolHandler = std::function<ToolResult(const std::string& input)>;

// Exactly two tools are registered by default: web_search and code_exec.
// Safe for concurrent invocation.
class Registry {
  public:
    enum class Mode { Passthrough, Record, Replay };

    Registry() = default;

    void register_tool(ToolSpec spec, ToolHandler handler);
    bool has(const std::string& name) const;
    std::vector<ToolSpec> specs() const;

    // Unknown names yield ok=false with an observation text (not a crash);
    // replay misses throw (the run cannot proceed meaningfully).
    ToolResult invoke(const std::string& name, const std::string& input) const;

    // Runs an assembled program through the bridged sandbox. Not a registered
    // tool; recorded/replayed under the pseudo-name "__recode_program". In
    // replay mode the program still executes (its bridge calls replay
    // individually) but the logged result wins, keeping records identical.
    ToolResult run_program(const std::string& program, const BridgeHandler& handler) const;
    void set_program_sandbox(std::shared_ptr<CodeSandbox> sandbox);

    void enable_recording(const std::string& log_path);
    void enable_replay(const std::string& log_path);

  private:
    void append_log(const std::string& pseudo_tool, const std::string& fingerprint,
                    const std::string& input, const ToolResult& result) const;

    std::vector<std::pair<ToolSpec, ToolHandler>> tools_;
    std::shared_ptr<CodeSandbox> program_sandbox_;
    Mode mode_ = Mode::Passthrough;
    std::shared_ptr<ToolLog> replay_;
    mutable std::mutex sink_mu_;
    std::shared_ptr<FILE> sink_;
};

struct RegistryConfig {
    std::shared_ptr<SearchProvider> search;     // required
    std::optional<CodeSandbox> sandbox;         // defaults to sandbox_from_env()
    std::optional<std::string> record_log;      // append tool results here
    std::optional<std::string> replay_log;      // serve tool results from here
};

// Builds the default two-tool registry.
std::shared_ptr<Registry> make_default_registry(RegistryConfig config);

}  // namespace pb::tools
