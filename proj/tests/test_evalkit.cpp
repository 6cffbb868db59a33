#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eval_corpus.hpp"
#include "pb/backend.hpp"
#include "pb/evalkit.hpp"
#include "pb/tools.hpp"

using namespace pb;

TEST_CASE("evaluator fixture corpus passes in full") {
    auto cases = pb_tests::eval_corpus();
    CHECK(cases.size() >= 40);
    for (const auto& c : cases) {
        INFO(c.name);
        CHECK(c.check());
    }
}

TEST_CASE("normalize_text handles unicode punctuation") {
    CHECK(normalize_text("\xE2\x80\x9CParis\xE2\x80\x9D") == "paris");  // curly quotes
    CHECK(normalize_text("caf\xC3\xA9") == "caf\xC3\xA9");              // letters survive
}

TEST_CASE("numeric match is symmetric and reflexive") {
    for (double v : {0.0, 1.0, -3.25, 1e9}) {
        CHECK(numeric_match(v, v));
    }
    CHECK(numeric_match(1.0, 1.0 + 5e-7) == numeric_match(1.0 + 5e-7, 1.0));
    CHECK(numeric_match(1.0, 1.0 + 2e-6) == numeric_match(1.0 + 2e-6, 1.0));
}

TEST_CASE("text_match failure carries a detail message") {
    EvalVerdict v = text_match("london", "paris");
    CHECK(!v.success);
    CHECK(!v.detail.empty());
}

TEST_CASE("eval_code executes fixture tests in the sandbox") {
    tools::CodeSandbox sandbox("python3", 30.0);
    Task task;
    task.id = "add-1";
    task.dataset = DatasetId::HumanEval;
    task.prompt = "implement add";
    task.metadata["entry_point"] = "add";
    task.metadata["test_program"] =
        "def check(candidate):\n"
        "    assert candidate(1, 2) == 3\n"
        "    assert candidate(-1, 1) == 0\n";

    SUBCASE("correct implementation passes") {
        EvalVerdict v = eval_code("```python\ndef add(a, b):\n    return a + b\n```", task, sandbox);
        CHECK(v.success);
        CHECK(v.method == EvalMethod::CodeExec);
    }
    SUBCASE("off-by-one implementation fails with assertion detail") {
        EvalVerdict v =
            eval_code("```python\ndef add(a, b):\n    return a + b + 1\n```", task, sandbox);
        CHECK(!v.success);
        CHECK(v.detail.find("AssertionError") != std::string::npos);
    }
    SUBCASE("prose-only response fails with no code found") {
        EvalVerdict v = eval_code("I would simply add the numbers together.", task, sandbox);
        CHECK(!v.success);
        CHECK(v.detail == "no code found");
    }
    SUBCASE("bare code without fences is accepted when it defines the entry point") {
        EvalVerdict v = eval_code("def add(a, b):\n    return a + b\n", task, sandbox);
        CHECK(v.success);
    }
}

TEST_CASE("eval_judge parses boxed verdicts from a scripted judge") {
    Task task;
    task.id = "h1";
    task.dataset = DatasetId::HLE;
    task.prompt = "hard question";
    task.reference = "42";

    SUBCASE("CORRECT verdict") {
        ScriptedBackend judge;
        judge.push_response("\\boxed{CORRECT}");
        EvalVerdict v = eval_judge("42", task, judge);
        CHECK(v.success);
        CHECK(v.method == EvalMethod::Judge);
    }
    SUBCASE("INCORRECT verdict") {
        ScriptedBackend judge;
        judge.push_response("\\boxed{INCORRECT}");
        CHECK(!eval_judge("41", task, judge).success);
    }
    SUBCASE("unparseable verdict fails with detail") {
        ScriptedBackend judge;
        judge.push_response("maybe");
        EvalVerdict v = eval_judge("41", task, judge);
        CHECK(!v.success);
        CHECK(v.detail == "judge verdict unparseable");
    }
}

TEST_CASE("evaluate dispatches per dataset") {
    tools::CodeSandbox sandbox("python3", 30.0);
    ScriptedBackend judge;

    SUBCASE("math: parse then compare with tolerance") {
        Task task;
        task.id = "m1";
        task.dataset = DatasetId::MATH500;
        task.prompt = "compute";
        task.reference = "0.5";
        EvalVerdict v = evaluate(DatasetId::MATH500, {"\\frac{1}{2}", ""}, task, &judge, &sandbox);
        CHECK(v.success);
        CHECK(v.method == EvalMethod::Numeric);
    }
    SUBCASE("math: unparseable prediction fails") {
        Task task;
        task.id = "m2";
        task.dataset = DatasetId::MATH500;
        task.prompt = "compute";
        task.reference = "1";
        CHECK(!evaluate(DatasetId::MATH500, {"no idea", ""}, task, &judge, &sandbox).success);
    }
    SUBCASE("qa: normalization equality") {
        Task task;
        task.id = "q1";
        task.dataset = DatasetId::NQ;
        task.prompt = "landmark";
        task.reference = "eiffel tower";
        CHECK(evaluate(DatasetId::NQ, {"The Eiffel Tower", ""}, task, &judge, &sandbox).success);
    }
    SUBCASE("mmlu: option letter") {
        Task task;
        task.id = "k1";
        task.dataset = DatasetId::MMLU;
        task.prompt = "pick";
        task.reference = "C";
        CHECK(evaluate(DatasetId::MMLU, {"\\boxed{C}", ""}, task, &judge, &sandbox).success);
    }
    SUBCASE("taubench: gold actions come from the JSON reference") {
        Task task;
        task.id = "t1";
        task.dataset = DatasetId::TauBench;
        task.prompt = "workflow";
        task.reference = "[\"lookup(order)\", \"refund(order)\"]";
        CHECK(evaluate(DatasetId::TauBench, {"lookup(order)\nrefund(order)", ""}, task, &judge,
                       &sandbox)
                  .success);
        CHECK(!evaluate(DatasetId::TauBench, {"refund(order)\nlookup(order)", ""}, task, &judge,
                        &sandbox)
                   .success);
    }
    SUBCASE("evaluate does not mutate its inputs") {
        Task task;
        task.id = "q2";
        task.dataset = DatasetId::NQ;
        task.prompt = "p";
        task.reference = "paris";
        Task copy = task;
        EvalInputs inputs{"paris", "resp"};
        evaluate(DatasetId::NQ, inputs, task, &judge, &sandbox);
        CHECK(task == copy);
        CHECK(inputs.answer == "paris");
    }
}
