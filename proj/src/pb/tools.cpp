#include "pb/tools.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pb/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace pb::tools {

void apply_output_cap(ToolResult& r) {
    if (r.output.size() > kOutputCap) {
        r.output.resize(kOutputCap);
        r.truncated = true;
    }
}

// ---------------------------------------------------------------------------
// Sandbox

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return (v && *v) ? std::string(v) : fallback;
}

std::string read_file_or_empty(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "";
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

struct ChildSpec {
    std::vector<std::string> argv;
    std::vector<std::string> env;
    std::string cwd;
    std::string stdout_path;
    std::string stderr_path;
};

pid_t spawn_child(const ChildSpec& spec) {
    std::vector<char*> argv;
    for (const auto& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    std::vector<char*> envp;
    for (const auto& e : spec.env) envp.push_back(const_cast<char*>(e.c_str()));
    envp.push_back(nullptr);

    pid_t pid = fork();
    if (pid < 0) {
        throw ToolError(ToolError::Kind::SandboxUnavailable,
                        std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        // child: only async-signal-safe calls until exec
        setpgid(0, 0);
        (void)unshare(CLONE_NEWNET);  // drop network when permitted; best effort
        int out = open(spec.stdout_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
        int err = open(spec.stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
        if (out < 0 || err < 0 || dup2(out, 1) < 0 || dup2(err, 2) < 0 ||
            chdir(spec.cwd.c_str()) != 0) {
            _exit(127);
        }
        close(out);
        close(err);
        execvpe(argv[0], argv.data(), envp.data());
        _exit(127);
    }
    return pid;
}

// Lazily opened write end of the response FIFO; the shim opens the read end at
// program start, so by the time a request arrives the open succeeds.
int open_response_fifo(const std::string& path) {
    for (int i = 0; i < 200; ++i) {
        int fd = open(path.c_str(), O_WRONLY | O_NONBLOCK);
        if (fd >= 0) return fd;
        if (errno != ENXIO) break;
        usleep(5000);
    }
    return -1;
}

}  // namespace

std::string bridge_shim_source() {
    // The shims open the response FIFO non-blocking first so a program that
    // never calls a primitive cannot deadlock against the supervisor.
    return R"PY(import json as _pb_json, os as _pb_os

_pb_req = open(_pb_os.environ["PB_BRIDGE_REQ"], "w")
_pb_resp_fd = _pb_os.open(_pb_os.environ["PB_BRIDGE_RESP"], _pb_os.O_RDONLY | _pb_os.O_NONBLOCK)
_pb_os.set_blocking(_pb_resp_fd, True)
_pb_resp = _pb_os.fdopen(_pb_resp_fd, "r")

def _pb_call(tool, payload):
    _pb_req.write(_pb_json.dumps({"tool": tool, "input": str(payload)}) + "\n")
    _pb_req.flush()
    line = _pb_resp.readline()
    if not line:
        raise RuntimeError("tool bridge closed")
    return _pb_json.loads(line)["output"]

def web_search(query):
    return _pb_call("web_search", query)

def code_exec(code):
    return _pb_call("code_exec", code)

)PY";
}

CodeSandbox::CodeSandbox(std::string interpreter_cmd, double timeout_s)
    : interpreter_cmd_(std::move(interpreter_cmd)), timeout_s_(timeout_s) {}

CodeSandbox sandbox_from_env() {
    std::string cmd = env_or("PB_EXEC_CMD", "python3");
    double timeout = std::atof(env_or("PB_EXEC_TIMEOUT_S", "30").c_str());
    if (timeout <= 0) timeout = kDefaultExecTimeoutS;
    return CodeSandbox(cmd, timeout);
}

ToolResult CodeSandbox::run(const std::string& source) const { return execute(source, nullptr); }

ToolResult CodeSandbox::run_with_bridge(const std::string& source,
                                        const BridgeHandler& handler) const {
    return execute(source, &handler);
}

ToolResult CodeSandbox::execute(const std::string& source, const BridgeHandler* handler) const {
    char tmpl[] = "/tmp/pb_sandbox_XXXXXX";
    char* dir_c = mkdtemp(tmpl);
    if (!dir_c) {
        throw ToolError(ToolError::Kind::SandboxUnavailable,
                        std::string("mkdtemp failed: ") + std::strerror(errno));
    }
    const fs::path dir(dir_c);
    const fs::path script = dir / "main.py";
    const fs::path out_path = dir / "stdout.txt";
    const fs::path err_path = dir / "stderr.txt";
    const fs::path req_path = dir / "bridge_req";
    const fs::path resp_path = dir / "bridge_resp";

    std::string program = handler ? bridge_shim_source() + source : source;
    {
        std::ofstream f(script, std::ios::binary);
        f << program;
        if (!f) {
            fs::remove_all(dir);
            throw ToolError(ToolError::Kind::SandboxUnavailable, "cannot write sandbox script");
        }
    }

    int req_fd = -1;
    if (handler) {
        if (mkfifo(req_path.c_str(), 0600) != 0 || mkfifo(resp_path.c_str(), 0600) != 0) {
            fs::remove_all(dir);
            throw ToolError(ToolError::Kind::SandboxUnavailable, "mkfifo failed");
        }
        req_fd = open(req_path.c_str(), O_RDONLY | O_NONBLOCK);
        if (req_fd < 0) {
            fs::remove_all(dir);
            throw ToolError(ToolError::Kind::SandboxUnavailable, "cannot open bridge fifo");
        }
    }

    ChildSpec spec;
    for (const auto& part : split(interpreter_cmd_, ' ')) {
        if (!part.empty()) spec.argv.push_back(part);
    }
    if (spec.argv.empty()) spec.argv.push_back("python3");
    spec.argv.push_back(script.string());
    spec.cwd = dir.string();
    spec.stdout_path = out_path.string();
    spec.stderr_path = err_path.string();
    spec.env = {
        "PATH=/usr/local/bin:/usr/bin:/bin",
        "HOME=" + dir.string(),
        "TMPDIR=" + dir.string(),
        "LC_ALL=C.UTF-8",
        "PYTHONDONTWRITEBYTECODE=1",
        "PYTHONIOENCODING=utf-8",
    };
    if (handler) {
        spec.env.push_back("PB_BRIDGE_REQ=" + req_path.string());
        spec.env.push_back("PB_BRIDGE_RESP=" + resp_path.string());
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto deadline = t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(timeout_s_));
    pid_t pid = spawn_child(spec);

    int resp_fd = -1;
    std::string pending;
    bool timed_out = false;
    int wstatus = 0;

    auto service_bridge = [&]() {
        if (req_fd < 0) return;
        char buf[4096];
        for (;;) {
            ssize_t n = read(req_fd, buf, sizeof(buf));
            if (n <= 0) break;
            pending.append(buf, static_cast<size_t>(n));
        }
        size_t nl;
        while ((nl = pending.find('\n')) != std::string::npos) {
            std::string line = pending.substr(0, nl);
            pending.erase(0, nl + 1);
            std::string output;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                output = "bridge error: malformed request";
            } else {
                output = (*handler)(j.value("tool", ""), j.value("input", ""));
            }
            if (resp_fd < 0) resp_fd = open_response_fifo(resp_path.string());
            if (resp_fd >= 0) {
                std::string reply = json{{"output", output}}.dump() + "\n";
                ssize_t w = write(resp_fd, reply.data(), reply.size());
                (void)w;
            }
        }
    };

    for (;;) {
        pid_t done = waitpid(pid, &wstatus, WNOHANG);
        if (done == pid) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &wstatus, 0);
            timed_out = true;
            break;
        }
        if (req_fd >= 0) {
            struct pollfd pfd{req_fd, POLLIN, 0};
            poll(&pfd, 1, 20);
            service_bridge();
        } else {
            usleep(10000);
        }
    }
    if (req_fd >= 0) service_bridge();  // drain anything written before exit

    const auto t1 = std::chrono::steady_clock::now();
    if (req_fd >= 0) close(req_fd);
    if (resp_fd >= 0) close(resp_fd);

    ToolResult result;
    result.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    std::string out = read_file_or_empty(out_path);
    std::string err = read_file_or_empty(err_path);
    result.output = out;
    if (!err.empty()) {
        if (!result.output.empty() && result.output.back() != '\n') result.output += "\n";
        result.output += err;
    }
    if (timed_out) {
        if (!result.output.empty() && result.output.back() != '\n') result.output += "\n";
        result.output += "[timed out after " + std::to_string(timeout_s_) + "s]";
        result.ok = false;
    } else {
        result.ok = WIFEXITED(wstatus) && WEXITSTATUS(wstatus) == 0;
    }
    apply_output_cap(result);

    std::error_code ec;
    fs::remove_all(dir, ec);
    return result;
}

// ---------------------------------------------------------------------------
// Search providers

FixtureSearchProvider::FixtureSearchProvider(const std::string& fixture_path) {
    std::ifstream in(fixture_path);
    if (!in) {
        throw ToolError(ToolError::Kind::Config, "search fixture not readable: " + fixture_path);
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ToolError(ToolError::Kind::Config, "search fixture is not a JSON object");
    }
    for (const auto& [query, hits] : j.items()) {
        std::vector<SearchHit> list;
        for (const auto& h : hits) {
            list.push_back(SearchHit{h.value("title", ""), h.value("excerpt", ""),
                                     h.value("url", "")});
        }
        entries_[query] = std::move(list);
    }
}

std::vector<SearchHit> FixtureSearchProvider::search(const std::string& query) {
    auto it = entries_.find(query);
    if (it == entries_.end()) return {};
    auto hits = it->second;
    if (hits.size() > kSearchSnippets) hits.resize(kSearchSnippets);
    return hits;
}

std::string render_search_hits(const std::vector<SearchHit>& hits) {
    if (hits.empty()) return "no results";
    std::string out;
    for (size_t i = 0; i < hits.size(); ++i) {
        out += std::to_string(i + 1) + ". " + hits[i].title + "\n";
        if (!hits[i].excerpt.empty()) out += hits[i].excerpt + "\n";
        if (!hits[i].url.empty()) out += hits[i].url + "\n";
        if (i + 1 < hits.size()) out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registry + record/replay

std::string tool_fingerprint(const std::string& name, const std::string& input) {
    json j{{"kind", "tool"}, {"tool", name}, {"input", canonicalize_newlines(input)}};
    return sha256_hex(j.dump());
}

ToolLog ToolLog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ToolError(ToolError::Kind::Config, "tool log not readable: " + path);
    }
    ToolLog log;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || j.value("kind", "") != "tool") continue;
        const json& r = j.at("result");
        ToolResult res;
        res.output = r.value("output", "");
        res.ok = r.value("ok", false);
        res.elapsed_ms = r.value("elapsed_ms", int64_t{0});
        res.truncated = r.value("truncated", false);
        log.entries_[j.value("fingerprint", "")] = std::move(res);
    }
    return log;
}

std::optional<ToolResult> ToolLog::find(const std::string& fingerprint) const {
    auto it = entries_.find(fingerprint);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void Registry::register_tool(ToolSpec spec, ToolHandler handler) {
    for (const auto& [existing, h] : tools_) {
        if (existing.name == spec.name) {
            throw ToolError(ToolError::Kind::Config, "duplicate tool name: " + spec.name);
        }
    }
    tools_.emplace_back(std::move(spec), std::move(handler));
}

bool Registry::has(const std::string& name) const {
    for (const auto& [spec, h] : tools_) {
        if (spec.name == name) return true;
    }
    return false;
}

std::vector<ToolSpec> Registry::specs() const {
    std::vector<ToolSpec> out;
    for (const auto& [spec, h] : tools_) out.push_back(spec);
    return out;
}

ToolResult Registry::invoke(const std::string& name, const std::string& input) const {
    const ToolHandler* handler = nullptr;
    for (const auto& [spec, h] : tools_) {
        if (spec.name == name) {
            handler = &h;
            break;
        }
    }
    if (!handler) {
        std::string names;
        for (const auto& [spec, h] : tools_) {
            if (!names.empty()) names += ", ";
            names += spec.name;
        }
        ToolResult r;
        r.ok = false;
        r.output = "unknown tool '" + name + "'; registered tools: " + names;
        return r;
    }

    const std::string fp = tool_fingerprint(name, input);
    if (mode_ == Mode::Replay) {
        auto found = replay_->find(fp);
        if (!found) {
            throw ToolError(ToolError::Kind::ReplayMiss,
                            "tool replay miss for " + name + " fingerprint " + fp);
        }
        return *found;
    }

    ToolResult result = (*handler)(input);
    apply_output_cap(result);

    if (mode_ == Mode::Record) append_log(name, fp, input, result);
    return result;
}

void Registry::append_log(const std::string& pseudo_tool, const std::string& fingerprint,
                          const std::string& input, const ToolResult& result) const {
    json entry{{"kind", "tool"},
               {"fingerprint", fingerprint},
               {"tool", pseudo_tool},
               {"input", input},
               {"result",
                {{"output", result.output},
                 {"ok", result.ok},
                 {"elapsed_ms", result.elapsed_ms},
                 {"truncated", result.truncated}}}};
    std::lock_guard lock(sink_mu_);
    std::string line = entry.dump();
    if (std::fputs(line.c_str(), sink_.get()) == EOF || std::fputc('\n', sink_.get()) == EOF ||
        std::fflush(sink_.get()) != 0) {
        throw ToolError(ToolError::Kind::Config, "tool log write failed");
    }
}

ToolResult Registry::run_program(const std::string& program, const BridgeHandler& handler) const {
    if (!program_sandbox_) {
        throw ToolError(ToolError::Kind::SandboxUnavailable,
                        "registry has no program sandbox configured");
    }
    const std::string fp = tool_fingerprint("__recode_program", program);
    ToolResult result = program_sandbox_->run_with_bridge(program, handler);
    apply_output_cap(result);
    if (mode_ == Mode::Replay) {
        auto logged = replay_->find(fp);
        if (!logged) {
            throw ToolError(ToolError::Kind::ReplayMiss,
                            "tool replay miss for program run fingerprint " + fp);
        }
        return *logged;
    }
    if (mode_ == Mode::Record) append_log("__recode_program", fp, program, result);
    return result;
}

void Registry::set_program_sandbox(std::shared_ptr<CodeSandbox> sandbox) {
    program_sandbox_ = std::move(sandbox);
}

void Registry::enable_recording(const std::string& log_path) {
    FILE* f = std::fopen(log_path.c_str(), "a");
    if (!f) {
        throw ToolError(ToolError::Kind::Config, "cannot open tool log: " + log_path);
    }
    sink_ = std::shared_ptr<FILE>(f, std::fclose);
    mode_ = Mode::Record;
}

void Registry::enable_replay(const std::string& log_path) {
    replay_ = std::make_shared<ToolLog>(ToolLog::load(log_path));
    mode_ = Mode::Replay;
}

std::shared_ptr<Registry> make_default_registry(RegistryConfig config) {
    auto registry = std::make_shared<Registry>();
    auto provider = config.search;
    if (!provider) {
        throw ToolError(ToolError::Kind::Config, "registry requires a search provider");
    }
    const bool fixture_like = dynamic_cast<FixtureSearchProvider*>(provider.get()) != nullptr;
    registry->register_tool(
        ToolSpec{"web_search",
                 "Search the web; returns up to 5 result snippets (title, excerpt, URL).",
                 "query string"},
        [provider, fixture_like](const std::string& input) {
            const auto t0 = std::chrono::steady_clock::now();
            std::vector<SearchHit> hits = provider->search(input);
            const auto t1 = std::chrono::steady_clock::now();
            ToolResult r;
            r.output = render_search_hits(hits);
            r.ok = true;  // empty results are a valid answer, not an error
            r.elapsed_ms =
                fixture_like
                    ? 0
                    : std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
            return r;
        });

    auto sandbox = std::make_shared<CodeSandbox>(config.sandbox ? *config.sandbox
                                                                : sandbox_from_env());
    registry->register_tool(
        ToolSpec{"code_exec",
                 "Execute a Python snippet in an isolated sandbox; returns stdout and stderr.",
                 "python source"},
        [sandbox](const std::string& input) { return sandbox->run(input); });
    registry->set_program_sandbox(sandbox);

    if (config.record_log) registry->enable_recording(*config.record_log);
    if (config.replay_log) registry->enable_replay(*config.replay_log);
    return registry;
}

}  // namespace pb::tools
