#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pb/core.hpp"

using namespace pb;

namespace {

RunRecord make_record(const std::string& model, ParadigmId p, DatasetId d,
                      const std::string& task_id, bool success, int64_t tokens = 100) {
    RunRecord r;
    r.model = model;
    r.paradigm = p;
    r.dataset = d;
    r.task_id = task_id;
    r.success = success;
    r.answer = "x";
    StepEvent e;
    e.kind = StepEvent::Kind::LlmCall;
    e.tokens_in = tokens / 2;
    e.tokens_out = tokens - tokens / 2;
    r.trace.push_back(e);
    r.tokens_total = tokens;
    r.llm_calls = 1;
    r.created_at = "2026-01-01T00:00:00Z";
    return r;
}

}  // namespace

TEST_CASE("canonical order is fixed") {
    CHECK(canonical_order(ParadigmId::Direct) == 0);
    CHECK(canonical_order(ParadigmId::CoT) == 1);
    CHECK(canonical_order(ParadigmId::ReAct) == 2);
    CHECK(canonical_order(ParadigmId::PlanExecute) == 3);
    CHECK(canonical_order(ParadigmId::Reflection) == 4);
    CHECK(canonical_order(ParadigmId::ReCode) == 5);
    CHECK(all_paradigms().size() == kParadigmCount);
}

TEST_CASE("dataset enumeration matches the one-hot layout order") {
    const auto& ds = all_datasets();
    REQUIRE(ds.size() == kDatasetCount);
    CHECK(dataset_name(ds[0]) == "humaneval");
    CHECK(dataset_name(ds[1]) == "math500");
    CHECK(dataset_name(ds[2]) == "aime");
    CHECK(dataset_name(ds[3]) == "hotpotqa");
    CHECK(dataset_name(ds[4]) == "nq");
    CHECK(dataset_name(ds[5]) == "mmlu");
    CHECK(dataset_name(ds[6]) == "hle");
    CHECK(dataset_name(ds[7]) == "gaia");
    CHECK(dataset_name(ds[8]) == "taubench");
    CHECK(dataset_name(ds[9]) == "seal");
}

TEST_CASE("paradigm names round-trip through the parser") {
    for (ParadigmId p : all_paradigms()) {
        CHECK(parse_paradigm(paradigm_name(p)) == p);
    }
    CHECK(parse_paradigm("ReAct") == ParadigmId::ReAct);
    CHECK(parse_paradigm("Plan-Execute") == ParadigmId::PlanExecute);
    CHECK(!parse_paradigm("nonsense").has_value());
}

TEST_CASE("matrix insert round-trips and replaces on duplicate keys") {
    RunMatrix m;
    RunRecord r = make_record("m1", ParadigmId::Direct, DatasetId::NQ, "t1", true);
    CHECK(!m.insert(r));
    CHECK(m.size() == 1);

    const RunRecord* found = m.find(key_of(r));
    REQUIRE(found != nullptr);
    CHECK(*found == r);

    RunRecord replacement = make_record("m1", ParadigmId::Direct, DatasetId::NQ, "t1", false, 7);
    CHECK(m.insert(replacement));  // duplicate key reported as replacement
    CHECK(m.size() == 1);
    CHECK(m.find(key_of(r))->success == false);

    CHECK(m.find(RunKey{"m1", ParadigmId::CoT, DatasetId::NQ, "t1"}) == nullptr);
}

TEST_CASE("matrix size equals distinct keys inserted") {
    RunMatrix m;
    int distinct = 0;
    for (const char* model : {"a", "b"}) {
        for (ParadigmId p : {ParadigmId::Direct, ParadigmId::ReAct}) {
            for (const char* task : {"t1", "t2", "t3"}) {
                m.insert(make_record(model, p, DatasetId::MMLU, task, true));
                ++distinct;
            }
        }
    }
    // re-insert everything once more: size must not change
    for (const char* model : {"a", "b"}) {
        for (ParadigmId p : {ParadigmId::Direct, ParadigmId::ReAct}) {
            for (const char* task : {"t1", "t2", "t3"}) {
                m.insert(make_record(model, p, DatasetId::MMLU, task, false));
            }
        }
    }
    CHECK(m.size() == static_cast<size_t>(distinct));
}

TEST_CASE("matrix helper indices") {
    RunMatrix m;
    m.insert(make_record("m1", ParadigmId::Direct, DatasetId::NQ, "t1", true));
    m.insert(make_record("m1", ParadigmId::CoT, DatasetId::NQ, "t1", false));
    m.insert(make_record("m1", ParadigmId::Direct, DatasetId::NQ, "t2", true));
    m.insert(make_record("m2", ParadigmId::Direct, DatasetId::NQ, "t1", true));

    CHECK(m.by_model_task("m1", DatasetId::NQ, "t1").size() == 2);
    CHECK(m.by_model_paradigm("m1", ParadigmId::Direct).size() == 2);
    CHECK(m.models() == std::vector<std::string>{"m1", "m2"});
    CHECK(m.tasks_of_model("m1").size() == 2);
}

TEST_CASE("records never carry negative counters") {
    RunRecord r = make_record("m", ParadigmId::ReCode, DatasetId::GAIA, "t", true, 512);
    CHECK(r.tokens_total >= 0);
    CHECK(r.llm_calls >= 0);
    CHECK(r.tool_calls >= 0);
    CHECK(r.wall_ms >= 0);
}

TEST_CASE("equal_ignoring_created_at masks only the timestamp") {
    RunRecord a = make_record("m", ParadigmId::Direct, DatasetId::NQ, "t", true);
    RunRecord b = a;
    b.created_at = "2026-02-02T00:00:00Z";
    CHECK(a.equal_ignoring_created_at(b));
    b.answer = "different";
    CHECK(!a.equal_ignoring_created_at(b));
}
