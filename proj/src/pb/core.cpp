#include "pb/core.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace pb {

int canonical_order(ParadigmId p) { return static_cast<int>(p); }

const std::vector<ParadigmId>& all_paradigms() {
    static const std::vector<ParadigmId> v = {ParadigmId::Direct,      ParadigmId::CoT,
                                              ParadigmId::ReAct,       ParadigmId::PlanExecute,
                                              ParadigmId::Reflection,  ParadigmId::ReCode};
    return v;
}

const std::vector<DatasetId>& all_datasets() {
    static const std::vector<DatasetId> v = {
        DatasetId::HumanEval, DatasetId::MATH500, DatasetId::AIME, DatasetId::HotpotQA,
        DatasetId::NQ,        DatasetId::MMLU,    DatasetId::HLE,  DatasetId::GAIA,
        DatasetId::TauBench,  DatasetId::SEAL};
    return v;
}

std::string paradigm_name(ParadigmId p) {
    switch (p) {
        case ParadigmId::Direct: return "direct";
        case ParadigmId::CoT: return "cot";
        case ParadigmId::ReAct: return "react";
        case ParadigmId::PlanExecute: return "plan_execute";
        case ParadigmId::Reflection: return "reflection";
        case ParadigmId::ReCode: return "recode";
    }
    return "direct";
}

std::string dataset_name(DatasetId d) {
    switch (d) {
        case DatasetId::HumanEval: return "humaneval";
        case DatasetId::MATH500: return "math500";
        case DatasetId::AIME: return "aime";
        case DatasetId::HotpotQA: return "hotpotqa";
        case DatasetId::NQ: return "nq";
        case DatasetId::MMLU: return "mmlu";
        case DatasetId::HLE: return "hle";
        case DatasetId::GAIA: return "gaia";
        case DatasetId::TauBench: return "taubench";
        case DatasetId::SEAL: return "seal";
    }
    return "humaneval";
}

namespace {
std::string fold_name(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (c == '-' || c == '_' || c == ' ') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}
}  // namespace

std::optional<ParadigmId> parse_paradigm(const std::string& name) {
    const std::string f = fold_name(name);
    for (ParadigmId p : all_paradigms()) {
        if (f == fold_name(paradigm_name(p))) return p;
    }
    // accept the display spellings too
    if (f == "chainofthought") return ParadigmId::CoT;
    if (f == "planexec" || f == "planthenexecute") return ParadigmId::PlanExecute;
    if (f == "reflect") return ParadigmId::Reflection;
    return std::nullopt;
}

std::optional<DatasetId> parse_dataset(const std::string& name) {
    const std::string f = fold_name(name);
    for (DatasetId d : all_datasets()) {
        if (f == fold_name(dataset_name(d))) return d;
    }
    if (f == "naturalquestions") return DatasetId::NQ;
    if (f == "taubench") return DatasetId::TauBench;
    return std::nullopt;
}

std::string step_kind_name(StepEvent::Kind k) {
    switch (k) {
        case StepEvent::Kind::LlmCall: return "llm_call";
        case StepEvent::Kind::ToolCall: return "tool_call";
        case StepEvent::Kind::Note: return "note";
    }
    return "note";
}

std::optional<StepEvent::Kind> parse_step_kind(const std::string& name) {
    if (name == "llm_call") return StepEvent::Kind::LlmCall;
    if (name == "tool_call") return StepEvent::Kind::ToolCall;
    if (name == "note") return StepEvent::Kind::Note;
    return std::nullopt;
}

bool RunRecord::equal_ignoring_created_at(const RunRecord& other) const {
    RunRecord a = *this;
    RunRecord b = other;
    a.created_at.clear();
    b.created_at.clear();
    return a == b;
}

bool RunKey::operator<(const RunKey& o) const {
    return std::tie(model, paradigm, dataset, task_id) <
           std::tie(o.model, o.paradigm, o.dataset, o.task_id);
}

std::string RunKey::to_string() const {
    return model + "/" + paradigm_name(paradigm) + "/" + dataset_name(dataset) + "/" + task_id;
}

RunKey key_of(const RunRecord& r) { return RunKey{r.model, r.paradigm, r.dataset, r.task_id}; }

bool RunMatrix::insert(RunRecord r) {
    RunKey key = key_of(r);
    auto [it, inserted] = records_.insert_or_assign(key, std::move(r));
    (void)it;
    return !inserted;
}

const RunRecord* RunMatrix::find(const RunKey& key) const {
    auto it = records_.find(key);
    return it == records_.end() ? nullptr : &it->second;
}

std::vector<const RunRecord*> RunMatrix::all() const {
    std::vector<const RunRecord*> out;
    out.reserve(records_.size());
    for (const auto& [k, v] : records_) out.push_back(&v);
    return out;
}

std::vector<const RunRecord*> RunMatrix::by_model_task(const std::string& model, DatasetId dataset,
                                                       const std::string& task_id) const {
    std::vector<const RunRecord*> out;
    for (ParadigmId p : all_paradigms()) {
        if (const RunRecord* r = find(RunKey{model, p, dataset, task_id})) out.push_back(r);
    }
    return out;
}

std::vector<const RunRecord*> RunMatrix::by_model_paradigm(const std::string& model,
                                                           ParadigmId p) const {
    std::vector<const RunRecord*> out;
    for (const auto& [k, v] : records_) {
        if (k.model == model && k.paradigm == p) out.push_back(&v);
    }
    return out;
}

std::vector<std::string> RunMatrix::models() const {
    std::set<std::string> seen;
    for (const auto& [k, v] : records_) seen.insert(k.model);
    return {seen.begin(), seen.end()};
}

std::vector<std::pair<DatasetId, std::string>> RunMatrix::tasks_of_model(
    const std::string& model) const {
    std::set<std::pair<DatasetId, std::string>> seen;
    for (const auto& [k, v] : records_) {
        if (k.model == model) seen.insert({k.dataset, k.task_id});
    }
    return {seen.begin(), seen.end()};
}

}  // namespace pb
