#pragma once
// Dataset-specific correctness judging: answer extraction, numeric / text /
// option-letter / action-sequence matching, execution-based code checks and
// the LLM judge hook.

#include <optional>
#include <string>
#include <vector>

#include "pb/core.hpp"

namespace pb {

class Backend;  // evalkit only needs chat() for the judge
namespace tools {
class CodeSandbox;
}

enum class EvalMethod {
    CodeExec,
    Numeric,
    TextMatch,
    TokenOverlap,
    OptionLetter,
    ActionMatch,
    Judge,
};
std::string eval_method_name(EvalMethod m);

struct EvalVerdict {
    bool success = false;
    EvalMethod method = EvalMethod::TextMatch;
    std::string detail;  // non-empty whenever success=false
};

// Content of the last balanced \boxed{...} group; nested braces allowed.
// Unbalanced groups are not occurrences.
std::optional<std::string> extract_boxed(const std::string& text);

// Plain decimals, signed/thousands-separated integers, scientific notation,
// \frac{a}{b} and a/b fractions, \sqrt{n} of perfect squares; a trailing '%'
// divides by 100.
std::optional<double> parse_numeric(const std::string& text);

// |pred - gold| <= 1e-6, boundary inclusive.
bool numeric_match(double pred, double gold);
inline constexpr double kNumericTolerance = 1e-6;

// lowercase; drop punctuation; remove articles {a, an, the}; collapse whitespace.
std::string normalize_text(const std::string& s);

// Exact normalized equality, else token-multiset F1 with threshold 0.5.
EvalVerdict text_match(const std::string& pred, const std::string& gold);
inline constexpr double kTokenOverlapThreshold = 0.5;
double token_f1(const std::string& pred, const std::string& gold);  // over normalized tokens

// Splices the first fenced code block (or the whole response when it already
// defines the entry point) with the task's test program and runs it in the
// sandbox. Task metadata: entry_point, test_program.
EvalVerdict eval_code(const std::string& pred_response, const Task& task,
                      tools::CodeSandbox& sandbox);

// Boxed content if present, else the first standalone letter A-E on the final
// line; case-insensitive comparison.
EvalVerdict eval_option_letter(const std::string& pred, const std::string& gold_letter);

// Order- and arity-sensitive exact comparison of "tool(args)" lines.
EvalVerdict eval_action_sequence(const std::string& pred,
                                 const std::vector<std::string>& gold_actions);

// One judge call with a fixed rubric; success iff the boxed verdict is CORRECT.
EvalVerdict eval_judge(const std::string& pred, const Task& task, Backend& judge);

struct EvalInputs {
    std::string answer;          // extracted final answer
    std::string final_response;  // evaluator-facing response text (code lives here)
};

// Dispatch over the per-dataset rules.
EvalVerdict evaluate(DatasetId dataset, const EvalInputs& outcome, const Task& task,
                     Backend* judge_backend, tools::CodeSandbox* sandbox);

}  // namespace pb
