#pragma once
// The six inference-time policies mapping a Task to a trace and a final answer.

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "pb/backend.hpp"
#include "pb/core.hpp"
#include "pb/prompts.hpp"
#include "pb/tools.hpp"

namespace pb {

struct ParadigmConfig {
    int react_max_turns = 15;
    int plan_exec_max_turns = 16;   // total LLM calls including the planning call
    int reflection_max_rounds = 3;  // critique/revise rounds after the solve loop
    int recode_max_lm_calls = 10;
    int recode_max_depth = 3;
    PromptSet prompts;
};

struct ParadigmOutcome {
    std::string answer;  // content of the final \boxed{...}, or the full response
    bool boxed = false;  // false marks the full-response fallback
    std::vector<StepEvent> trace;
    bool budget_exhausted = false;
    // What evaluators should treat as the response text. For most paradigms the
    // last assistant message; for ReCode the assembled program in a code fence.
    std::string final_response;
};

// Runs the assembled ReCode program; overridable in tests.
using ProgramRunner =
    std::function<tools::ToolResult(const std::string& program, const tools::BridgeHandler&)>;

struct ExecContext {
    Backend* backend = nullptr;
    std::shared_ptr<tools::Registry> tools;  // required for tool-enabled paradigms
    ParadigmConfig config;
    std::string model;
    ProgramRunner program_runner;  // defaults to tools->run_program
};

// Task prompt plus rendered "A) ..." choice lines when present.
std::string render_task_user_message(const Task& task);

// First "Action: <tool>[<input>]" line of an assistant message.
struct ActionDirective {
    std::string tool;
    std::string input;
};
std::optional<ActionDirective> parse_action(const std::string& message);

// Numbered plan steps; zero numbered lines degenerate to a 1-step plan.
std::vector<std::string> parse_plan_steps(const std::string& response);

ParadigmOutcome run_direct(const Task& task, ExecContext& ctx);
ParadigmOutcome run_cot(const Task& task, ExecContext& ctx);
ParadigmOutcome run_react(const Task& task, ExecContext& ctx);
ParadigmOutcome run_plan_execute(const Task& task, ExecContext& ctx);
ParadigmOutcome run_reflection(const Task& task, ExecContext& ctx);
ParadigmOutcome run_recode(const Task& task, ExecContext& ctx);

ParadigmOutcome run_paradigm(ParadigmId paradigm, const Task& task, ExecContext& ctx);

}  // namespace pb
