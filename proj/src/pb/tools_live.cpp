// Live web-search provider, isolated here for the same compile-cost reason as
// the live backend.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "pb/tools.hpp"

using nlohmann::json;

namespace pb::tools {

namespace {
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
}  // namespace

LiveSearchProvider::LiveSearchProvider(std::string base, std::string key)
    : base_(std::move(base)), key_(std::move(key)) {
    if (base_.empty()) {
        throw ToolError(ToolError::Kind::Config, "live search requires PB_SEARCH_BASE");
    }
}

std::vector<SearchHit> LiveSearchProvider::search(const std::string& query) {
    const BaseUrl url = split_base(base_);
    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        httplib::Client client(url.origin);
        client.set_connection_timeout(30, 0);
        client.set_read_timeout(60, 0);
        httplib::Headers headers;
        if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
        httplib::Params params{{"q", query}, {"k", std::to_string(kSearchSnippets)}};
        auto res = client.Get(url.prefix + "/search", params, headers);
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http " + std::to_string(res->status);
            continue;
        }
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded()) {
            last_error = "malformed search response";
            continue;
        }
        const json& items = j.is_array() ? j : j.value("results", json::array());
        std::vector<SearchHit> hits;
        for (const auto& h : items) {
            hits.push_back(
                SearchHit{h.value("title", ""), h.value("excerpt", ""), h.value("url", "")});
            if (hits.size() >= kSearchSnippets) break;
        }
        return hits;
    }
    throw ToolError(ToolError::Kind::Provider, "search failed after retries: " + last_error);
}

}  // namespace pb::tools
