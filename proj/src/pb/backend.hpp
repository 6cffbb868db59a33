#pragma once
// Uniform chat-completion and text-embedding interface with three
// implementations: live HTTP endpoint, scripted (programmable responses) and
// replay (recorded exchanges). A recording decorator captures exchanges for
// later replay.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pb/util.hpp"

namespace pb {

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<int> max_turn_hint;  // advisory only
};

struct ChatResponse {
    std::string content;
    int64_t tokens_in = 0;
    int64_t tokens_out = 0;
    bool estimated = false;  // set when usage data was absent and counts are ceil(chars/4)
    int64_t elapsed_ms = 0;  // logged with the exchange so replay reproduces timing
};

struct EmbeddingVector {
    std::vector<double> values;
    bool operator==(const EmbeddingVector&) const = default;
};

enum class BackendErrorKind { ReplayMiss, Transport, Auth, Config, ScriptExhausted };

class BackendError : public std::runtime_error {
  public:
    BackendError(BackendErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    BackendErrorKind kind() const { return kind_; }

  private:
    BackendErrorKind kind_;
};

// Fingerprints are SHA-256 digests of canonicalized request content
// (line endings normalized to '\n', all other bytes preserved).
std::string chat_fingerprint(const ChatRequest& req);
std::string embed_fingerprint(const std::string& model, const std::string& text);

// All implementations are safe for concurrent calls.
class Backend {
  public:
    virtual ~Backend() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual int embedding_dim() const = 0;
};

// ceil(chars/4) fallback used when an endpoint reports no usage data.
int64_t estimate_tokens(std::string_view text);

// FIFO queue of responses plus optional substring-pattern rules; the queue is
// consumed first, then the first matching rule, then the default response.
// A pattern may join several required substrings with "&&" (all must match
// the rendered request). Embeddings are deterministic hashed bags of tokens.
class ScriptedBackend : public Backend {
  public:
    explicit ScriptedBackend(int embedding_dim = 1536) : dim_(embedding_dim) {}

    void push_response(std::string content);
    void add_rule(std::string pattern, std::string response);  // matched against rendered request
    void set_default_response(std::string content) { default_response_ = std::move(content); }

    ChatResponse chat(const ChatRequest& req) override;
    EmbeddingVector embed(const std::string& text) override;
    int embedding_dim() const override { return dim_; }

    int64_t chat_calls() const;
    int64_t embed_calls() const;

  private:
    mutable std::mutex mu_;
    std::deque<std::string> queue_;
    std::vector<std::pair<std::string, std::string>> rules_;
    std::optional<std::string> default_response_;
    int dim_;
    int64_t chat_calls_ = 0;
    int64_t embed_calls_ = 0;
};

// Deterministic pseudo-embedding shared by ScriptedBackend and tests: a hashed
// bag of lowercase tokens plus a whole-text salt bucket, unit-normalized.
EmbeddingVector hash_embedding(const std::string& text, int dim);

// Read-only lookup over a recorded exchange log. A fingerprint miss signals a
// drifted prompt and aborts the run.
class ReplayBackend : public Backend {
  public:
    explicit ReplayBackend(const std::string& log_path);

    ChatResponse chat(const ChatRequest& req) override;
    EmbeddingVector embed(const std::string& text) override;
    int embedding_dim() const override { return dim_; }

    size_t chat_entries() const { return chats_.size(); }
    size_t embed_entries() const { return embeds_.size(); }

  private:
    std::map<std::string, ChatResponse> chats_;
    std::map<std::string, EmbeddingVector> embeds_;
    std::string embed_model_;
    int dim_ = 1536;
};

// Pass-through decorator appending every exchange to a JSON Lines log in
// arrival order. A sink write failure aborts the run.
class RecordingBackend : public Backend {
  public:
    RecordingBackend(std::shared_ptr<Backend> inner, const std::string& log_path,
                     std::string embed_model = "text-embedding-3-small");
    ~RecordingBackend() override;

    ChatResponse chat(const ChatRequest& req) override;
    EmbeddingVector embed(const std::string& text) override;
    int embedding_dim() const override { return inner_->embedding_dim(); }

  private:
    void append_line(const std::string& line);

    std::shared_ptr<Backend> inner_;
    std::string embed_model_;
    std::mutex sink_mu_;
    FILE* sink_ = nullptr;
};

struct LiveConfig {
    std::string api_base;   // {base}/chat/completions
    std::string api_key;
    std::string embed_base;  // defaults to api_base
    std::string embed_key;   // defaults to api_key
    std::string embed_model = "text-embedding-3-small";
    int embed_dim = 1536;
    int max_retries = 3;            // retries after the initial attempt
    int backoff_initial_ms = 1000;  // 1s/2s/4s
    // injectable for tests; defaults to a real sleep
    std::function<void(int64_t)> sleep_ms;
};

// Reads PB_API_BASE, PB_API_KEY, PB_EMBED_BASE, PB_EMBED_KEY, PB_EMBED_MODEL,
// PB_EMBED_DIM from the environment.
LiveConfig live_config_from_env();

// OpenAI-compatible chat-completions and embeddings over HTTP with bounded
// retries and exponential backoff on transient transport failures.
class LiveBackend : public Backend {
  public:
    explicit LiveBackend(LiveConfig config);

    ChatResponse chat(const ChatRequest& req) override;
    EmbeddingVector embed(const std::string& text) override;
    int embedding_dim() const override { return config_.embed_dim; }

  private:
    std::string post_json(const std::string& base, const std::string& key,
                          const std::string& path, const std::string& body, int64_t* elapsed_ms);
    LiveConfig config_;
};

}  // namespace pb
