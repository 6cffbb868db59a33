#include "pb/backend.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

using nlohmann::json;

namespace pb {

namespace {

json request_to_json(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return json{{"model", req.model}, {"temperature", req.temperature}, {"messages", messages}};
}

json canonical_chat_json(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", m.role}, {"content", canonicalize_newlines(m.content)}});
    }
    return json{{"kind", "chat"},
                {"model", req.model},
                {"temperature", req.temperature},
                {"messages", messages}};
}

std::string render_request_text(const ChatRequest& req) {
    std::string out;
    for (const auto& m : req.messages) {
        out += m.role;
        out += ": ";
        out += m.content;
        out += "\n";
    }
    return out;
}

}  // namespace

std::string chat_fingerprint(const ChatRequest& req) {
    return sha256_hex(canonical_chat_json(req).dump());
}

std::string embed_fingerprint(const std::string& model, const std::string& text) {
    json j{{"kind", "embed"}, {"model", model}, {"text", canonicalize_newlines(text)}};
    return sha256_hex(j.dump());
}

int64_t estimate_tokens(std::string_view text) {
    return static_cast<int64_t>((text.size() + 3) / 4);
}

// ---------------------------------------------------------------------------
// ScriptedBackend

void ScriptedBackend::push_response(std::string content) {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(content));
}

void ScriptedBackend::add_rule(std::string pattern, std::string response) {
    std::lock_guard lock(mu_);
    rules_.emplace_back(std::move(pattern), std::move(response));
}

ChatResponse ScriptedBackend::chat(const ChatRequest& req) {
    std::string content;
    {
        std::lock_guard lock(mu_);
        ++chat_calls_;
        if (!queue_.empty()) {
            content = std::move(queue_.front());
            queue_.pop_front();
        } else {
            const std::string rendered = render_request_text(req);
            auto rule_matches = [&rendered](const std::string& pattern) {
                size_t start = 0;
                for (;;) {
                    size_t sep = pattern.find("&&", start);
                    std::string part = trim(pattern.substr(
                        start, sep == std::string::npos ? std::string::npos : sep - start));
                    if (!part.empty() && rendered.find(part) == std::string::npos) return false;
                    if (sep == std::string::npos) return true;
                    start = sep + 2;
                }
            };
            bool matched = false;
            for (const auto& [pattern, response] : rules_) {
                if (rule_matches(pattern)) {
                    content = response;
                    matched = true;
                    break;
                }
            }
            if (!matched) {
                if (!default_response_) {
                    throw BackendError(BackendErrorKind::ScriptExhausted,
                                       "scripted backend exhausted: no queued response, rule or "
                                       "default matches the request");
                }
                content = *default_response_;
            }
        }
    }
    ChatResponse resp;
    resp.content = std::move(content);
    int64_t in = 0;
    for (const auto& m : req.messages) in += estimate_tokens(m.content);
    resp.tokens_in = in;
    resp.tokens_out = estimate_tokens(resp.content);
    resp.estimated = true;
    resp.elapsed_ms = 0;
    return resp;
}

EmbeddingVector ScriptedBackend::embed(const std::string& text) {
    if (trim(text).empty()) {
        throw BackendError(BackendErrorKind::Config, "embed: text is empty");
    }
    {
        std::lock_guard lock(mu_);
        ++embed_calls_;
    }
    return hash_embedding(text, dim_);
}

int64_t ScriptedBackend::chat_calls() const {
    std::lock_guard lock(mu_);
    return chat_calls_;
}

int64_t ScriptedBackend::embed_calls() const {
    std::lock_guard lock(mu_);
    return embed_calls_;
}

EmbeddingVector hash_embedding(const std::string& text, int dim) {
    EmbeddingVector v;
    v.values.assign(static_cast<size_t>(dim), 0.0);
    // hashed bag of lowercase alphanumeric tokens
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        uint64_t h = fnv1a64(token);
        size_t bucket = static_cast<size_t>(h % static_cast<uint64_t>(dim));
        double sign = (h >> 63) ? -1.0 : 1.0;
        v.values[bucket] += sign;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    // whole-text salt so distinct texts differ even with equal token bags
    uint64_t salt = fnv1a64(canonicalize_newlines(text));
    v.values[static_cast<size_t>(salt % static_cast<uint64_t>(dim))] +=
        0.5 * ((salt >> 62) & 1 ? -1.0 : 1.0);

    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v.values) x /= norm;
    }
    return v;
}

// ---------------------------------------------------------------------------
// ReplayBackend

ReplayBackend::ReplayBackend(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) {
        throw BackendError(BackendErrorKind::Config, "replay log not readable: " + log_path);
    }
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw BackendError(BackendErrorKind::Config,
                               "replay log parse error at line " + std::to_string(lineno));
        }
        const std::string kind = j.value("kind", "");
        const std::string fp = j.value("fingerprint", "");
        if (kind == "chat") {
            const json& r = j.at("response");
            ChatResponse resp;
            resp.content = r.value("content", "");
            resp.tokens_in = r.value("tokens_in", int64_t{0});
            resp.tokens_out = r.value("tokens_out", int64_t{0});
            resp.estimated = r.value("estimated", false);
            resp.elapsed_ms = r.value("elapsed_ms", int64_t{0});
            chats_[fp] = std::move(resp);
        } else if (kind == "embed") {
            EmbeddingVector v;
            for (const auto& x : j.at("response").at("values")) {
                v.values.push_back(x.get<double>());
            }
            if (!v.values.empty()) dim_ = static_cast<int>(v.values.size());
            if (j.contains("request") && j["request"].contains("model")) {
                embed_model_ = j["request"]["model"].get<std::string>();
            }
            embeds_[fp] = std::move(v);
        }
        // unknown kinds are skipped so future log extensions stay readable
    }
}

ChatResponse ReplayBackend::chat(const ChatRequest& req) {
    const std::string fp = chat_fingerprint(req);
    auto it = chats_.find(fp);
    if (it == chats_.end()) {
        throw BackendError(BackendErrorKind::ReplayMiss,
                           "replay miss for chat fingerprint " + fp +
                               " (prompt drifted from the recorded run)");
    }
    return it->second;
}

EmbeddingVector ReplayBackend::embed(const std::string& text) {
    const std::string model = embed_model_.empty() ? "text-embedding-3-small" : embed_model_;
    const std::string fp = embed_fingerprint(model, text);
    auto it = embeds_.find(fp);
    if (it == embeds_.end()) {
        throw BackendError(BackendErrorKind::ReplayMiss,
                           "replay miss for embed fingerprint " + fp);
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// RecordingBackend

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, const std::string& log_path,
                                   std::string embed_model)
    : inner_(std::move(inner)), embed_model_(std::move(embed_model)) {
    sink_ = std::fopen(log_path.c_str(), "a");
    if (!sink_) {
        throw BackendError(BackendErrorKind::Config, "cannot open record log: " + log_path);
    }
}

RecordingBackend::~RecordingBackend() {
    if (sink_) std::fclose(sink_);
}

void RecordingBackend::append_line(const std::string& line) {
    std::lock_guard lock(sink_mu_);
    if (std::fputs(line.c_str(), sink_) == EOF || std::fputc('\n', sink_) == EOF ||
        std::fflush(sink_) != 0) {
        throw BackendError(BackendErrorKind::Config, "record log write failed");
    }
}

ChatResponse RecordingBackend::chat(const ChatRequest& req) {
    ChatResponse resp = inner_->chat(req);
    json entry{{"kind", "chat"},
               {"fingerprint", chat_fingerprint(req)},
               {"request", request_to_json(req)},
               {"response",
                {{"content", resp.content},
                 {"tokens_in", resp.tokens_in},
                 {"tokens_out", resp.tokens_out},
                 {"estimated", resp.estimated},
                 {"elapsed_ms", resp.elapsed_ms}}}};
    append_line(entry.dump());
    return resp;
}

EmbeddingVector RecordingBackend::embed(const std::string& text) {
    EmbeddingVector v = inner_->embed(text);
    json entry{{"kind", "embed"},
               {"fingerprint", embed_fingerprint(embed_model_, text)},
               {"request", {{"model", embed_model_}, {"text", text}}},
               {"response", {{"values", v.values}}}};
    append_line(entry.dump());
    return v;
}

}  // namespace pb
