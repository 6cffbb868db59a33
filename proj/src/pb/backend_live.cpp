// Live OpenAI-compatible HTTP backend. Kept in its own TU because httplib with
// TLS support is heavy to compile.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "pb/backend.hpp"

using nlohmann::json;

namespace pb {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return (v && *v) ? std::string(v) : fallback;
}

// Splits "https://host:port/v1" into client origin and path prefix.
struct BaseUrl {
    std::string origin;
    std::string prefix;
};

BaseUrl split_base(const std::string& base) {
    std::string b = base;
    while (!b.empty() && b.back() == '/') b.pop_back();
    size_t scheme = b.find("://");
    size_t path_start = (scheme == std::string::npos) ? b.find('/') : b.find('/', scheme + 3);
    if (path_start == std::string::npos) return {b, ""};
    return {b.substr(0, path_start), b.substr(path_start)};
}

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

LiveConfig live_config_from_env() {
    LiveConfig cfg;
    cfg.api_base = env_or("PB_API_BASE", "");
    cfg.api_key = env_or("PB_API_KEY", "");
    cfg.embed_base = env_or("PB_EMBED_BASE", cfg.api_base);
    cfg.embed_key = env_or("PB_EMBED_KEY", cfg.api_key);
    cfg.embed_model = env_or("PB_EMBED_MODEL", "text-embedding-3-small");
    cfg.embed_dim = std::atoi(env_or("PB_EMBED_DIM", "1536").c_str());
    if (cfg.embed_dim <= 0) cfg.embed_dim = 1536;
    return cfg;
}

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {
    if (config_.api_base.empty()) {
        throw BackendError(BackendErrorKind::Config,
                           "live backend requires PB_API_BASE (or --api-base)");
    }
    if (config_.embed_base.empty()) config_.embed_base = config_.api_base;
    if (config_.embed_key.empty()) config_.embed_key = config_.api_key;
    if (!config_.sleep_ms) {
        config_.sleep_ms = [](int64_t ms) {
            std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        };
    }
}

std::string LiveBackend::post_json(const std::string& base, const std::string& key,
                                   const std::string& path, const std::string& body,
                                   int64_t* elapsed_ms) {
    const BaseUrl url = split_base(base);
    std::string last_error;
    int64_t backoff = config_.backoff_initial_ms;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            config_.sleep_ms(backoff);
            backoff *= 2;
        }
        const auto t0 = std::chrono::steady_clock::now();
        httplib::Client client(url.origin);
        client.set_connection_timeout(30, 0);
        client.set_read_timeout(600, 0);
        httplib::Headers headers;
        if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
        auto res = client.Post(url.prefix + path, headers, body, "application/json");
        const auto t1 = std::chrono::steady_clock::now();
        if (elapsed_ms) {
            *elapsed_ms =
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        }
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw BackendError(BackendErrorKind::Auth,
                               "auth rejected (" + std::to_string(res->status) + "): " + res->body);
        }
        if (retryable_status(res->status)) {
            last_error = "http " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        if (res->status != 200) {
            throw BackendError(BackendErrorKind::Transport,
                               "http " + std::to_string(res->status) + ": " + res->body);
        }
        return res->body;
    }
    throw BackendError(BackendErrorKind::Transport,
                       "retries exhausted after " + std::to_string(config_.max_retries + 1) +
                           " attempts: " + last_error);
}

ChatResponse LiveBackend::chat(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    json body{{"model", req.model}, {"messages", messages}, {"temperature", req.temperature}};

    int64_t elapsed = 0;
    const std::string raw =
        post_json(config_.api_base, config_.api_key, "/chat/completions", body.dump(), &elapsed);
    json j = json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
        throw BackendError(BackendErrorKind::Transport, "malformed chat response: " + raw);
    }
    ChatResponse resp;
    resp.content = j["choices"][0]["message"].value("content", "");
    resp.elapsed_ms = elapsed;
    if (j.contains("usage") && j["usage"].contains("prompt_tokens")) {
        resp.tokens_in = j["usage"].value("prompt_tokens", int64_t{0});
        resp.tokens_out = j["usage"].value("completion_tokens", int64_t{0});
    } else {
        int64_t in = 0;
        for (const auto& m : req.messages) in += estimate_tokens(m.content);
        resp.tokens_in = in;
        resp.tokens_out = estimate_tokens(resp.content);
        resp.estimated = true;
    }
    return resp;
}

EmbeddingVector LiveBackend::embed(const std::string& text) {
    if (trim(text).empty()) {
        throw BackendError(BackendErrorKind::Config, "embed: text is empty");
    }
    json body{{"model", config_.embed_model}, {"input", text}};
    const std::string raw =
        post_json(config_.embed_base, config_.embed_key, "/embeddings", body.dump(), nullptr);
    json j = json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.contains("data") || j["data"].empty()) {
        throw BackendError(BackendErrorKind::Transport, "malformed embeddings response: " + raw);
    }
    EmbeddingVector v;
    for (const auto& x : j["data"][0]["embedding"]) v.values.push_back(x.get<double>());
    return v;
}

}  // namespace pb
