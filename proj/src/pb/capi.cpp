// extern-C surface over the engine. Exceptions stop here.

#include "paradigmbench.h"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <cstring>
#include <string>

#include "pb/engine.hpp"
#include "pb/evalkit.hpp"

using nlohmann::json;

struct pb_engine {
    pb::Engine engine;
    std::string last_error;
    explicit pb_engine(pb::EngineConfig cfg) : engine(std::move(cfg)) {}
};

namespace {

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

pb_status classify_exception(const std::exception& e) {
    if (dynamic_cast<const pb::ConfigError*>(&e)) return PB_ERR_CONFIG;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return PB_ERR_CONFIG;
    return PB_ERR_RUNTIME;
}

json parse_options(const char* options_json) {
    if (!options_json || !*options_json) return json::object();
    json j = json::parse(options_json, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::invalid_argument("options must be a JSON object");
    }
    return j;
}

using EngineOp = pb::EngineResult (pb::Engine::*)(const json&);

pb_status dispatch(pb_engine* engine, EngineOp op, const char* options_json, char** out_report) {
    if (!engine || !out_report) return PB_ERR_INVALID;
    *out_report = nullptr;
    try {
        json opts = parse_options(options_json);
        pb::EngineResult result = (engine->engine.*op)(opts);
        *out_report = dup_string(result.output);
        engine->last_error.clear();
        return static_cast<pb_status>(result.exit_code);
    } catch (const std::exception& e) {
        engine->last_error = e.what();
        return classify_exception(e);
    } catch (...) {
        engine->last_error = "unknown error";
        return PB_ERR_RUNTIME;
    }
}

}  // namespace

extern "C" {

const char* pb_version(void) { return "0.1.0"; }

pb_status pb_engine_new(const char* config_json, pb_engine** out_engine) {
    if (!out_engine) return PB_ERR_INVALID;
    *out_engine = nullptr;
    try {
        json j = json::object();
        if (config_json && *config_json) {
            j = json::parse(config_json, nullptr, false);
            if (j.is_discarded()) return PB_ERR_INVALID;
        }
        *out_engine = new pb_engine(pb::EngineConfig::from_json(j));
        return PB_OK;
    } catch (const std::exception&) {
        return PB_ERR_CONFIG;
    }
}

void pb_engine_free(pb_engine* engine) { delete engine; }

const char* pb_engine_last_error(const pb_engine* engine) {
    return engine ? engine->last_error.c_str() : "";
}

pb_status pb_run(pb_engine* engine, const char* options_json, char** out_report) {
    return dispatch(engine, &pb::Engine::run, options_json, out_report);
}

pb_status pb_analyze(pb_engine* engine, const char* options_json, char** out_report) {
    return dispatch(engine, &pb::Engine::analyze, options_json, out_report);
}

pb_status pb_train_router(pb_engine* engine, const char* options_json, char** out_report) {
    return dispatch(engine, &pb::Engine::train_router, options_json, out_report);
}

pb_status pb_route(pb_engine* engine, const char* options_json, char** out_report) {
    return dispatch(engine, &pb::Engine::route, options_json, out_report);
}

pb_status pb_selfroute(pb_engine* engine, const char* options_json, char** out_report) {
    return dispatch(engine, &pb::Engine::selfroute, options_json, out_report);
}

pb_status pb_extract_boxed(const char* text, char** out_content) {
    if (!text || !out_content) return PB_ERR_INVALID;
    *out_content = nullptr;
    auto boxed = pb::extract_boxed(text);
    if (!boxed) return PB_ERR_NOT_FOUND;
    *out_content = dup_string(*boxed);
    return PB_OK;
}

pb_status pb_normalize_text(const char* text, char** out_normalized) {
    if (!text || !out_normalized) return PB_ERR_INVALID;
    *out_normalized = dup_string(pb::normalize_text(text));
    return PB_OK;
}

void pb_string_free(char* s) { std::free(s); }

}  // extern "C"
