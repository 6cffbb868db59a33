#include "pb/evalkit.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <regex>
#include <sstream>

#include "pb/backend.hpp"
#include "pb/tools.hpp"
#include "pb/util.hpp"

using nlohmann::json;

namespace pb {

std::string eval_method_name(EvalMethod m) {
    switch (m) {
        case EvalMethod::CodeExec: return "code_exec";
        case EvalMethod::Numeric: return "numeric";
        case EvalMethod::TextMatch: return "text_match";
        case EvalMethod::TokenOverlap: return "token_overlap";
        case EvalMethod::OptionLetter: return "option_letter";
        case EvalMethod::ActionMatch: return "action_match";
        case EvalMethod::Judge: return "judge";
    }
    return "text_match";
}

// ---------------------------------------------------------------------------
// extract_boxed

std::optional<std::string> extract_boxed(const std::string& text) {
    static const std::string marker = "\\boxed{";
    std::optional<std::string> last;
    size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
        size_t i = pos + marker.size();
        int depth = 1;
        std::string content;
        bool balanced = false;
        for (; i < text.size(); ++i) {
            char c = text[i];
            if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    balanced = true;
                    break;
                }
            }
            content.push_back(c);
        }
        if (balanced) last = content;  // last complete occurrence wins
        pos += marker.size();
    }
    return last;
}

// ---------------------------------------------------------------------------
// parse_numeric

namespace {

bool parse_plain_double(const std::string& s, double* out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    *out = v;
    return true;
}

bool parse_integer_token(const std::string& s, double* out) {
    static const std::regex thousands(R"(^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$)");
    if (std::regex_match(s, thousands)) {
        std::string stripped;
        for (char c : s) {
            if (c != ',') stripped.push_back(c);
        }
        return parse_plain_double(stripped, out);
    }
    return false;
}

// \frac{a}{b} with optional sign; a and b are themselves plain numbers.
bool parse_latex_frac(const std::string& s, double* out) {
    static const std::regex frac(R"(^([+-]?)\\frac\{([^{}]+)\}\{([^{}]+)\}$)");
    std::smatch m;
    if (!std::regex_match(s, m, frac)) return false;
    double a = 0, b = 0;
    if (!parse_plain_double(trim(m[2].str()), &a) || !parse_plain_double(trim(m[3].str()), &b) ||
        b == 0.0) {
        return false;
    }
    double v = a / b;
    *out = (m[1].str() == "-") ? -v : v;
    return true;
}

bool parse_slash_frac(const std::string& s, double* out) {
    static const std::regex frac(R"(^([+-]?\d+)\s*/\s*(\d+)$)");
    std::smatch m;
    if (!std::regex_match(s, m, frac)) return false;
    double a = std::strtod(m[1].str().c_str(), nullptr);
    double b = std::strtod(m[2].str().c_str(), nullptr);
    if (b == 0.0) return false;
    *out = a / b;
    return true;
}

bool parse_sqrt(const std::string& s, double* out) {
    static const std::regex sq(R"(^([+-]?)\\sqrt\{(\d+)\}$)");
    std::smatch m;
    if (!std::regex_match(s, m, sq)) return false;
    double n = std::strtod(m[2].str().c_str(), nullptr);
    double r = std::sqrt(n);
    double ri = std::round(r);
    if (ri * ri != n) return false;  // perfect squares only
    *out = (m[1].str() == "-") ? -ri : ri;
    return true;
}

}  // namespace

std::optional<double> parse_numeric(const std::string& text) {
    std::string s = trim(text);
    if (s.empty()) return std::nullopt;
    // surrounding $...$ from LaTeX answers
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = trim(s.substr(1, s.size() - 2));
    if (s.empty()) return std::nullopt;

    double percent_divisor = 1.0;
    if (s.back() == '%') {
        percent_divisor = 100.0;
        s = trim(s.substr(0, s.size() - 1));
        if (s.empty()) return std::nullopt;
    }

    double v = 0;
    if (parse_plain_double(s, &v) || parse_integer_token(s, &v) || parse_latex_frac(s, &v) ||
        parse_slash_frac(s, &v) || parse_sqrt(s, &v)) {
        return v / percent_divisor;
    }
    return std::nullopt;
}

bool numeric_match(double pred, double gold) {
    return std::fabs(pred - gold) <= kNumericTolerance;
}

// ---------------------------------------------------------------------------
// normalize_text / text_match

namespace {

// Decodes one UTF-8 code point; advances i. Malformed bytes pass through as-is.
uint32_t next_codepoint(const std::string& s, size_t& i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    uint32_t cp = c;
    size_t extra = 0;
    if (c >= 0xF0) {
        cp = c & 0x07;
        extra = 3;
    } else if (c >= 0xE0) {
        cp = c & 0x0F;
        extra = 2;
    } else if (c >= 0xC0) {
        cp = c & 0x1F;
        extra = 1;
    }
    for (size_t k = 0; k < extra && i + 1 < s.size(); ++k) {
        unsigned char cc = static_cast<unsigned char>(s[i + 1]);
        if ((cc & 0xC0) != 0x80) break;
        cp = (cp << 6) | (cc & 0x3F);
        ++i;
    }
    ++i;
    return cp;
}

bool is_punct_codepoint(uint32_t cp) {
    if (cp < 0x80) return std::ispunct(static_cast<int>(cp)) != 0;
    // common non-ASCII punctuation: general punctuation block, quotes, dashes
    if (cp >= 0x2000 && cp <= 0x206F) return true;
    switch (cp) {
        case 0x00A1: case 0x00A6: case 0x00A7: case 0x00AB: case 0x00B6: case 0x00B7:
        case 0x00BB: case 0x00BF: case 0x2E2E: case 0x3001: case 0x3002: case 0xFF01:
        case 0xFF0C: case 0xFF0E: case 0xFF1A: case 0xFF1B: case 0xFF1F:
            return true;
        default:
            return false;
    }
}

void append_utf8(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::vector<std::string> tokens_of(const std::string& normalized) {
    std::vector<std::string> out;
    for (const auto& t : split(normalized, ' ')) {
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

}  // namespace

std::string normalize_text(const std::string& s) {
    // lowercase + strip punctuation + fold whitespace in one pass over code points
    std::string stripped;
    stripped.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        uint32_t cp = next_codepoint(s, i);
        if (is_punct_codepoint(cp)) continue;
        if (cp < 0x80 && std::isspace(static_cast<int>(cp))) {
            stripped.push_back(' ');
        } else if (cp == 0x00A0 || cp == 0x3000) {  // non-breaking / ideographic space
            stripped.push_back(' ');
        } else if (cp < 0x80) {
            stripped.push_back(
                static_cast<char>(std::tolower(static_cast<unsigned char>(cp))));
        } else {
            append_utf8(stripped, cp);
        }
    }
    // drop articles, collapse whitespace
    std::string out;
    for (const auto& word : split(stripped, ' ')) {
        if (word.empty() || word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

double token_f1(const std::string& pred, const std::string& gold) {
    const auto p = tokens_of(normalize_text(pred));
    const auto g = tokens_of(normalize_text(gold));
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> gold_counts;
    for (const auto& t : g) ++gold_counts[t];
    int common = 0;
    for (const auto& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++common;
            --it->second;
        }
    }
    if (common == 0) return 0.0;
    double precision = static_cast<double>(common) / static_cast<double>(p.size());
    double recall = static_cast<double>(common) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

EvalVerdict text_match(const std::string& pred, const std::string& gold) {
    const std::string np = normalize_text(pred);
    const std::string ng = normalize_text(gold);
    if (np == ng) {
        return EvalVerdict{true, EvalMethod::TextMatch, "normalized texts equal"};
    }
    double f1 = token_f1(pred, gold);
    std::ostringstream detail;
    detail << "token F1 " << f1 << (f1 >= kTokenOverlapThreshold ? " >= " : " < ")
           << kTokenOverlapThreshold;
    return EvalVerdict{f1 >= kTokenOverlapThreshold, EvalMethod::TokenOverlap, detail.str()};
}

// ---------------------------------------------------------------------------
// eval_code

namespace {

std::optional<std::string> first_fenced_block(const std::string& text) {
    size_t open = text.find("```");
    if (open == std::string::npos) return std::nullopt;
    size_t body_start = text.find('\n', open);
    if (body_start == std::string::npos) return std::nullopt;
    ++body_start;
    size_t close = text.find("```", body_start);
    if (close == std::string::npos) return std::nullopt;
    return text.substr(body_start, close - body_start);
}

}  // namespace

EvalVerdict eval_code(const std::string& pred_response, const Task& task,
                      tools::CodeSandbox& sandbox) {
    auto entry_it = task.metadata.find("entry_point");
    auto test_it = task.metadata.find("test_program");
    if (entry_it == task.metadata.end() || test_it == task.metadata.end()) {
        return EvalVerdict{false, EvalMethod::CodeExec,
                           "task metadata lacks entry_point/test_program"};
    }
    const std::string& entry_point = entry_it->second;

    std::string code;
    if (auto block = first_fenced_block(pred_response)) {
        code = *block;
    } else if (pred_response.find("def " + entry_point) != std::string::npos) {
        code = pred_response;  // bare code without fences
    } else {
        return EvalVerdict{false, EvalMethod::CodeExec, "no code found"};
    }

    std::string program = code;
    program += "\n\n";
    program += test_it->second;
    if (test_it->second.find("def check(") != std::string::npos) {
        program += "\n\ncheck(" + entry_point + ")\n";
    }
    tools::ToolResult run = sandbox.run(program);
    const bool asserted = run.output.find("AssertionError") != std::string::npos;
    if (run.ok && !asserted) {
        return EvalVerdict{true, EvalMethod::CodeExec, "tests passed"};
    }
    std::string detail = trim(run.output);
    if (detail.empty()) detail = "test program failed";
    return EvalVerdict{false, EvalMethod::CodeExec, detail};
}

// ---------------------------------------------------------------------------
// eval_option_letter

namespace {

// First standalone letter A-E (either case) in the text, word-bounded.
std::optional<char> first_standalone_letter(const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (up < 'A' || up > 'E') continue;
        bool left_ok = (i == 0) || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
        bool right_ok =
            (i + 1 == text.size()) || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
        if (left_ok && right_ok) return up;
    }
    return std::nullopt;
}

}  // namespace

EvalVerdict eval_option_letter(const std::string& pred, const std::string& gold_letter) {
    const std::string gold = trim(gold_letter);
    std::optional<char> extracted;
    if (auto boxed = extract_boxed(pred)) {
        std::string inner = trim(*boxed);
        if (inner.size() == 1 && std::isalpha(static_cast<unsigned char>(inner[0]))) {
            extracted = static_cast<char>(std::toupper(static_cast<unsigned char>(inner[0])));
        } else {
            extracted = first_standalone_letter(inner);
        }
    }
    if (!extracted) {
        // final non-empty line of the response
        std::string final_line;
        for (const auto& line : split_lines(pred)) {
            if (!trim(line).empty()) final_line = line;
        }
        extracted = first_standalone_letter(final_line);
    }
    if (!extracted) {
        return EvalVerdict{false, EvalMethod::OptionLetter, "no option letter found"};
    }
    char gold_up = gold.empty()
                       ? '?'
                       : static_cast<char>(std::toupper(static_cast<unsigned char>(gold[0])));
    if (gold.size() == 1 && *extracted == gold_up) {
        return EvalVerdict{true, EvalMethod::OptionLetter,
                           std::string("extracted ") + *extracted};
    }
    return EvalVerdict{false, EvalMethod::OptionLetter,
                       std::string("extracted ") + *extracted + ", expected " + gold};
}

// ---------------------------------------------------------------------------
// eval_action_sequence

namespace {

std::string normalize_action(const std::string& line) {
    // strip list numbering, collapse interior whitespace
    static const std::regex numbering(R"(^\s*(?:\d+[.)]\s*|[-*]\s+)?)");
    std::string s = std::regex_replace(line, numbering, "");
    std::string out;
    bool in_space = false;
    for (char c : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out.push_back(c);
        }
    }
    return out;
}

bool looks_like_action(const std::string& normalized) {
    static const std::regex call(R"(^[A-Za-z_][A-Za-z0-9_]*\(.*\)$)");
    return std::regex_match(normalized, call);
}

}  // namespace

EvalVerdict eval_action_sequence(const std::string& pred,
                                 const std::vector<std::string>& gold_actions) {
    if (gold_actions.empty()) {
        return EvalVerdict{false, EvalMethod::ActionMatch, "empty gold action sequence"};
    }
    std::string source = pred;
    if (auto boxed = extract_boxed(pred)) source = *boxed;

    std::vector<std::string> predicted;
    for (const auto& line : split_lines(source)) {
        std::string norm = normalize_action(line);
        if (!norm.empty() && looks_like_action(norm)) predicted.push_back(norm);
    }
    std::vector<std::string> gold;
    for (const auto& g : gold_actions) gold.push_back(normalize_action(g));

    if (predicted.size() != gold.size()) {
        return EvalVerdict{false, EvalMethod::ActionMatch,
                           "predicted " + std::to_string(predicted.size()) + " actions, expected " +
                               std::to_string(gold.size())};
    }
    for (size_t i = 0; i < gold.size(); ++i) {
        if (predicted[i] != gold[i]) {
            return EvalVerdict{false, EvalMethod::ActionMatch,
                               "action " + std::to_string(i + 1) + " mismatch: '" + predicted[i] +
                                   "' vs '" + gold[i] + "'"};
        }
    }
    return EvalVerdict{true, EvalMethod::ActionMatch, "sequence matches"};
}

// ---------------------------------------------------------------------------
// eval_judge

namespace {
const char* kJudgeSystemPrompt =
    "You are grading an answer to a difficult question. Compare the prediction against the "
    "reference answer. Judge only whether the prediction is correct; ignore style. Respond "
    "with \\boxed{CORRECT} or \\boxed{INCORRECT}.";
}

EvalVerdict eval_judge(const std::string& pred, const Task& task, Backend& judge) {
    ChatRequest req;
    req.model = task.metadata.count("judge_model") ? task.metadata.at("judge_model") : "judge";
    req.temperature = 0.0;
    req.messages.push_back({"system", kJudgeSystemPrompt});
    req.messages.push_back({"user", "Question:\n" + task.prompt + "\n\nReference answer:\n" +
                                        task.reference + "\n\nPrediction:\n" + pred});
    ChatResponse resp = judge.chat(req);
    auto boxed = extract_boxed(resp.content);
    if (!boxed) {
        return EvalVerdict{false, EvalMethod::Judge, "judge verdict unparseable"};
    }
    std::string verdict = to_lower(trim(*boxed));
    if (verdict == "correct") {
        return EvalVerdict{true, EvalMethod::Judge, "judge: CORRECT"};
    }
    if (verdict == "incorrect") {
        return EvalVerdict{false, EvalMethod::Judge, "judge: INCORRECT"};
    }
    return EvalVerdict{false, EvalMethod::Judge, "judge verdict unparseable"};
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

EvalVerdict eval_numeric_pair(const std::string& answer, const std::string& gold) {
    auto p = parse_numeric(answer);
    if (!p) {
        return EvalVerdict{false, EvalMethod::Numeric, "prediction not numeric: " + answer};
    }
    auto g = parse_numeric(gold);
    if (!g) {
        return EvalVerdict{false, EvalMethod::Numeric, "gold not numeric: " + gold};
    }
    if (numeric_match(*p, *g)) {
        return EvalVerdict{true, EvalMethod::Numeric, "within tolerance"};
    }
    std::ostringstream detail;
    detail << *p << " vs " << *g << " exceeds tolerance";
    return EvalVerdict{false, EvalMethod::Numeric, detail.str()};
}

std::vector<std::string> gold_actions_of(const Task& task) {
    json j = json::parse(task.reference, nullptr, false);
    std::vector<std::string> actions;
    if (!j.is_discarded() && j.is_array()) {
        for (const auto& a : j) {
            if (a.is_string()) actions.push_back(a.get<std::string>());
        }
    }
    return actions;
}

}  // namespace

EvalVerdict evaluate(DatasetId dataset, const EvalInputs& outcome, const Task& task,
                     Backend* judge_backend, tools::CodeSandbox* sandbox) {
    switch (dataset) {
        case DatasetId::HumanEval: {
            if (!sandbox) {
                throw tools::ToolError(tools::ToolError::Kind::SandboxUnavailable,
                                       "code evaluation requires a sandbox");
            }
            return eval_code(outcome.final_response, task, *sandbox);
        }
        case DatasetId::MATH500:
        case DatasetId::AIME:
            return eval_numeric_pair(outcome.answer, task.reference);
        case DatasetId::HotpotQA:
        case DatasetId::NQ:
        case DatasetId::GAIA:
        case DatasetId::SEAL:
            return text_match(outcome.answer, task.reference);
        case DatasetId::MMLU:
            return eval_option_letter(outcome.answer, task.reference);
        case DatasetId::TauBench:
            return eval_action_sequence(outcome.answer, gold_actions_of(task));
        case DatasetId::HLE: {
            if (!judge_backend) {
                throw BackendError(BackendErrorKind::Config,
                                   "judge evaluation requires a backend");
            }
            return eval_judge(outcome.answer, task, *judge_backend);
        }
    }
    return EvalVerdict{false, EvalMethod::TextMatch, "unknown dataset"};
}

}  // namespace pb
