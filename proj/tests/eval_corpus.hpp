#pragma once
// Shared evaluator fixture corpus. Expected values are hand-derived and
// frozen; both the unit suite and the acceptance suite run every case.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pb/evalkit.hpp"

namespace pb_tests {

struct CorpusResult {
    int passed = 0;
    int failed = 0;
    std::vector<std::string> failures;
};

struct CorpusCase {
    std::string name;
    std::function<bool()> check;
};

inline std::vector<CorpusCase> eval_corpus() {
    using pb::extract_boxed;
    using pb::normalize_text;
    using pb::numeric_match;
    using pb::parse_numeric;
    using pb::text_match;
    using pb::token_f1;
    using pb::eval_action_sequence;
    using pb::eval_option_letter;
    using pb::EvalMethod;

    std::vector<CorpusCase> cases;
    auto add = [&](std::string name, std::function<bool()> check) {
        cases.push_back({std::move(name), std::move(check)});
    };

    // --- boxed extraction ---
    add("boxed_simple", [] { return extract_boxed("thus \\boxed{42}.") == "42"; });
    add("boxed_last_wins", [] { return extract_boxed("\\boxed{1} ... \\boxed{2}") == "2"; });
    add("boxed_nested_frac",
        [] { return extract_boxed("\\boxed{\\frac{1}{2}}") == "\\frac{1}{2}"; });
    add("boxed_absent", [] { return !extract_boxed("no box here").has_value(); });
    add("boxed_unbalanced", [] { return !extract_boxed("\\boxed{unbalanced").has_value(); });
    add("boxed_nested_plain", [] { return extract_boxed("\\boxed{a{b}c}") == "a{b}c"; });
    add("boxed_last_complete",
        [] { return extract_boxed("\\boxed{x} then \\boxed{unclosed") == "x"; });
    add("boxed_empty", [] { return extract_boxed("answer \\boxed{}") == ""; });
    add("boxed_multiline",
        [] { return extract_boxed("line1\n\\boxed{multi\nline}") == "multi\nline"; });
    add("boxed_balanced_content", [] {
        auto b = extract_boxed("\\boxed{f{g{h}}} trail");
        if (!b) return false;
        int depth = 0;
        for (char c : *b) {
            if (c == '{') ++depth;
            if (c == '}' && --depth < 0) return false;
        }
        return depth == 0;
    });

    // --- numeric parsing ---
    auto near = [](std::optional<double> v, double want) {
        return v.has_value() && std::fabs(*v - want) < 1e-12;
    };
    add("num_latex_frac", [=] { return near(parse_numeric("\\frac{1}{2}"), 0.5); });
    add("num_thousands", [=] { return near(parse_numeric("1,234"), 1234.0); });
    add("num_scientific", [=] { return near(parse_numeric("3.2e-1"), 0.32); });
    add("num_signed_int", [=] { return near(parse_numeric("-5"), -5.0); });
    add("num_plain_int", [=] { return near(parse_numeric("42"), 42.0); });
    add("num_percent", [=] { return near(parse_numeric("50%"), 0.5); });
    add("num_slash_frac", [=] { return near(parse_numeric("3/4"), 0.75); });
    add("num_sqrt_perfect", [=] { return near(parse_numeric("\\sqrt{49}"), 7.0); });
    add("num_sqrt_imperfect", [] { return !parse_numeric("\\sqrt{2}").has_value(); });
    add("num_garbage", [] { return !parse_numeric("abc").has_value(); });
    add("num_thousands_long", [=] { return near(parse_numeric("1,234,567"), 1234567.0); });
    add("num_negative_frac", [=] { return near(parse_numeric("-\\frac{3}{4}"), -0.75); });
    add("num_dollar_wrapped", [=] { return near(parse_numeric("$0.5$"), 0.5); });

    // --- numeric tolerance (1e-6 absolute, boundary inclusive) ---
    add("tol_inside", [] { return numeric_match(1.0000005, 1.0); });
    add("tol_outside", [] { return !numeric_match(1.000002, 1.0); });
    add("tol_boundary_inclusive", [] { return numeric_match(1e-6, 0.0); });
    add("tol_above_boundary", [] { return !numeric_match(2e-6, 0.0); });
    add("tol_frac_parse", [=] {
        auto v = parse_numeric("\\frac{1}{2}");
        return v.has_value() && numeric_match(0.5, *v);
    });

    // --- normalization ---
    add("norm_article_punct", [] { return normalize_text("The Eiffel Tower!") == "eiffel tower"; });
    add("norm_trim", [] { return normalize_text("  Paris ") == "paris"; });
    add("norm_empty", [] { return normalize_text("").empty(); });
    add("norm_articles_all",
        [] { return normalize_text("A    man, an apple; the end.") == "man apple end"; });
    add("norm_idempotent", [] {
        for (const char* s : {"The Eiffel Tower!", "a b the c", "Mixed   CASE?", ""}) {
            std::string once = normalize_text(s);
            if (normalize_text(once) != once) return false;
        }
        return true;
    });

    // --- text match / token overlap ---
    add("text_exact_after_norm", [] {
        auto v = text_match("the Paris", "Paris");
        return v.success && v.method == EvalMethod::TextMatch;
    });
    add("text_overlap_pass", [] {
        auto v = text_match("paris", "paris france");
        return v.success && v.method == EvalMethod::TokenOverlap;
    });
    add("text_no_overlap", [] { return !text_match("london", "paris").success; });
    add("text_f1_value", [] {
        // pred {paris}, gold {paris, france}: P=1, R=1/2, F1=2/3
        return std::fabs(token_f1("paris", "paris france") - 2.0 / 3.0) < 1e-9;
    });
    add("text_f1_at_threshold", [] {
        // P=1, R=1/3 -> F1=0.5 exactly; threshold is inclusive
        return text_match("red", "red green blue").success;
    });
    add("text_f1_below_threshold", [] {
        // P=1, R=1/4 -> F1=0.4
        return !text_match("red", "red green blue yellow").success;
    });
    add("text_identity_nonempty", [] {
        for (const char* s : {"x", "two words", "The A!"}) {
            if (!text_match(s, s).success) return false;
        }
        return true;
    });

    // --- option letter extraction ---
    add("opt_boxed", [] { return eval_option_letter("\\boxed{C}", "C").success; });
    add("opt_parenthesized_lowercase",
        [] { return eval_option_letter("The answer is (b)", "B").success; });
    add("opt_first_letter_rule",
        [] { return !eval_option_letter("I think C or D", "D").success; });
    add("opt_boxed_lowercase", [] { return eval_option_letter("\\boxed{c}", "C").success; });
    add("opt_final_line_only", [] {
        // earlier lines mention other letters; only the final line counts
        return eval_option_letter("A is tempting.\nActually: D", "D").success;
    });

    // --- action sequences (order- and arity-sensitive) ---
    const std::vector<std::string> gold = {"search(flights)", "book(AA123)", "pay(card)"};
    add("act_exact",
        [=] { return eval_action_sequence("search(flights)\nbook(AA123)\npay(card)", gold).success; });
    add("act_transposed",
        [=] { return !eval_action_sequence("book(AA123)\nsearch(flights)\npay(card)", gold).success; });
    add("act_extra_trailing", [=] {
        return !eval_action_sequence("search(flights)\nbook(AA123)\npay(card)\nconfirm()", gold)
                    .success;
    });
    add("act_boxed_list", [=] {
        return eval_action_sequence("\\boxed{search(flights)\nbook(AA123)\npay(card)}", gold)
            .success;
    });
    add("act_numbered_list", [=] {
        return eval_action_sequence("1. search(flights)\n2. book(AA123)\n3. pay(card)", gold)
            .success;
    });

    return cases;
}

inline CorpusResult run_eval_corpus() {
    CorpusResult result;
    for (const auto& c : eval_corpus()) {
        if (c.check()) {
            ++result.passed;
        } else {
            ++result.failed;
            result.failures.push_back(c.name);
        }
    }
    return result;
}

}  // namespace pb_tests
