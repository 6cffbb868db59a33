#include "pb/paradigms.hpp"

#include <deque>
#include <regex>
#include <set>

#include "pb/evalkit.hpp"
#include "pb/util.hpp"

namespace pb {

namespace {

std::string render_messages(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const auto& m : messages) {
        out += m.role;
        out += ": ";
        out += m.content;
        out += "\n";
    }
    return out;
}

// Single chat turn recorded as an llm_call event.
std::string traced_chat(ExecContext& ctx, const std::vector<ChatMessage>& messages,
                        std::vector<StepEvent>& trace, std::optional<int> turn_hint = {}) {
    ChatRequest req;
    req.model = ctx.model;
    req.messages = messages;
    req.temperature = 0.0;
    req.max_turn_hint = turn_hint;
    ChatResponse resp = ctx.backend->chat(req);
    StepEvent ev;
    ev.kind = StepEvent::Kind::LlmCall;
    ev.request = render_messages(messages);
    ev.response = resp.content;
    ev.tokens_in = resp.tokens_in;
    ev.tokens_out = resp.tokens_out;
    ev.elapsed_ms = resp.elapsed_ms;
    trace.push_back(std::move(ev));
    return resp.content;
}

void trace_note(std::vector<StepEvent>& trace, const std::string& text) {
    StepEvent ev;
    ev.kind = StepEvent::Kind::Note;
    ev.response = text;
    trace.push_back(std::move(ev));
}

void trace_tool(std::vector<StepEvent>& trace, const std::string& tool, const std::string& input,
                const tools::ToolResult& result) {
    StepEvent ev;
    ev.kind = StepEvent::Kind::ToolCall;
    ev.tool = tool;
    ev.request = input;
    ev.response = result.output;
    ev.elapsed_ms = result.elapsed_ms;
    trace.push_back(std::move(ev));
}

std::string system_with_tools(ExecContext& ctx, PromptKind kind) {
    std::string tmpl = ctx.config.prompts.get(kind);
    std::string tool_list =
        ctx.tools ? render_tool_list(ctx.tools->specs()) : std::string("(no tools registered)\n");
    return render_template(tmpl, {{"tools", tool_list}});
}

void set_answer(ParadigmOutcome& out, const std::string& response) {
    if (auto boxed = extract_boxed(response)) {
        out.answer = *boxed;
        out.boxed = true;
    } else {
        out.answer = trim(response);
        out.boxed = false;
    }
}

constexpr const char* kUnparseableActionObservation =
    "could not parse an action; write 'Action: <tool>[<input>]' on its own line, or give your "
    "final answer inside \\boxed{}";

// Shared thought-action-observation loop. Runs at most max_turns assistant
// turns on top of the seeded message list; stops early on a boxed answer.
struct LoopResult {
    std::string last_response;
    bool found_box = false;
    bool exhausted = false;
    int llm_calls = 0;
};

LoopResult tool_loop(ExecContext& ctx, std::vector<ChatMessage> messages, int max_turns,
                     std::vector<StepEvent>& trace) {
    LoopResult result;
    for (int turn = 1; turn <= max_turns; ++turn) {
        std::string response = traced_chat(ctx, messages, trace, max_turns - turn + 1);
        ++result.llm_calls;
        result.last_response = response;
        if (extract_boxed(response)) {
            result.found_box = true;
            return result;
        }
        if (turn == max_turns) {
            result.exhausted = true;
            return result;
        }
        messages.push_back({"assistant", response});
        std::string observation;
        if (auto action = parse_action(response)) {
            tools::ToolResult tr = ctx.tools->invoke(action->tool, action->input);
            if (ctx.tools->has(action->tool)) {
                trace_tool(trace, action->tool, action->input, tr);
            } else {
                trace_note(trace, tr.output);  // unknown tool: observation only
            }
            observation = tr.output;
        } else {
            trace_note(trace, kUnparseableActionObservation);
            observation = kUnparseableActionObservation;
        }
        messages.push_back({"tool", "Observation: " + observation});
    }
    result.exhausted = true;
    return result;
}

ParadigmOutcome run_single_call(const Task& task, ExecContext& ctx, PromptKind kind) {
    ParadigmOutcome out;
    std::vector<ChatMessage> messages = {
        {"system", ctx.config.prompts.get(kind)},
        {"user", render_task_user_message(task)},
    };
    std::string response = traced_chat(ctx, messages, out.trace);
    set_answer(out, response);
    out.final_response = response;
    return out;
}

void require_tools(const ExecContext& ctx, const char* paradigm) {
    if (!ctx.tools) {
        throw std::runtime_error(std::string(paradigm) + " requires a tool registry");
    }
}

}  // namespace

std::string render_task_user_message(const Task& task) {
    std::string out = task.prompt;
    if (!task.choices.empty()) {
        out += "\n";
        for (size_t i = 0; i < task.choices.size(); ++i) {
            out += "\n";
            out += static_cast<char>('A' + i);
            out += ") ";
            out += task.choices[i];
        }
    }
    return out;
}

std::optional<ActionDirective> parse_action(const std::string& message) {
    static const std::regex action(R"(^\s*Action:\s*([A-Za-z_][A-Za-z0-9_]*)\s*\[(.*)\]\s*$)");
    for (const auto& line : split_lines(message)) {
        std::smatch m;
        if (std::regex_match(line, m, action)) {
            return ActionDirective{m[1].str(), m[2].str()};
        }
    }
    return std::nullopt;
}

std::vector<std::string> parse_plan_steps(const std::string& response) {
    static const std::regex step(R"(^\s*(\d+)[.)]\s*(.\S*.*)$)");
    std::vector<std::string> steps;
    for (const auto& line : split_lines(response)) {
        std::smatch m;
        if (std::regex_match(line, m, step)) {
            steps.push_back(trim(m[2].str()));
        }
    }
    if (steps.empty()) {
        std::string raw = trim(response);
        if (!raw.empty()) steps.push_back(raw);
    }
    return steps;
}

ParadigmOutcome run_direct(const Task& task, ExecContext& ctx) {
    return run_single_call(task, ctx, PromptKind::Direct);
}

ParadigmOutcome run_cot(const Task& task, ExecContext& ctx) {
    return run_single_call(task, ctx, PromptKind::CoT);
}

ParadigmOutcome run_react(const Task& task, ExecContext& ctx) {
    require_tools(ctx, "react");
    ParadigmOutcome out;
    std::vector<ChatMessage> messages = {
        {"system", system_with_tools(ctx, PromptKind::React)},
        {"user", render_task_user_message(task)},
    };
    LoopResult loop = tool_loop(ctx, std::move(messages), ctx.config.react_max_turns, out.trace);
    set_answer(out, loop.last_response);
    out.final_response = loop.last_response;
    out.budget_exhausted = loop.exhausted;
    return out;
}

ParadigmOutcome run_plan_execute(const Task& task, ExecContext& ctx) {
    require_tools(ctx, "plan_execute");
    ParadigmOutcome out;

    std::vector<ChatMessage> plan_messages = {
        {"system", ctx.config.prompts.get(PromptKind::PlanExecutePlan)},
        {"user", render_task_user_message(task)},
    };
    std::string plan_response = traced_chat(ctx, plan_messages, out.trace);
    std::vector<std::string> steps = parse_plan_steps(plan_response);
    std::string plan_text;
    for (size_t i = 0; i < steps.size(); ++i) {
        plan_text += std::to_string(i + 1) + ". " + steps[i] + "\n";
    }
    trace_note(out.trace, "plan (" + std::to_string(steps.size()) + " steps):\n" + plan_text);

    int remaining = ctx.config.plan_exec_max_turns - 1;  // plan call counts toward the budget
    if (remaining <= 0) {
        set_answer(out, plan_response);
        out.final_response = plan_response;
        out.budget_exhausted = true;
        return out;
    }
    std::vector<ChatMessage> exec_messages = {
        {"system", system_with_tools(ctx, PromptKind::PlanExecuteExec)},
        {"user", render_task_user_message(task) + "\n\nPlan:\n" + plan_text},
    };
    LoopResult loop = tool_loop(ctx, std::move(exec_messages), remaining, out.trace);
    set_answer(out, loop.last_response);
    out.final_response = loop.last_response;
    out.budget_exhausted = loop.exhausted;
    return out;
}

ParadigmOutcome run_reflection(const Task& task, ExecContext& ctx) {
    require_tools(ctx, "reflection");
    ParadigmOutcome out;

    std::vector<ChatMessage> solve_messages = {
        {"system", system_with_tools(ctx, PromptKind::ReflectionSolve)},
        {"user", render_task_user_message(task)},
    };
    LoopResult solve =
        tool_loop(ctx, std::move(solve_messages), ctx.config.react_max_turns, out.trace);
    std::string current_response = solve.last_response;
    bool exhausted = solve.exhausted;

    const std::string user_task = render_task_user_message(task);
    bool satisfied = false;
    for (int round = 1; round <= ctx.config.reflection_max_rounds; ++round) {
        std::vector<ChatMessage> critique_messages = {
            {"system", ctx.config.prompts.get(PromptKind::ReflectionReflect)},
            {"user", "Question:\n" + user_task + "\n\nAnswer:\n" + current_response},
        };
        std::string critique = traced_chat(ctx, critique_messages, out.trace);
        if (critique.find("SATISFACTORY") != std::string::npos) {
            satisfied = true;
            break;
        }
        std::vector<ChatMessage> revise_messages = {
            {"system", ctx.config.prompts.get(PromptKind::ReflectionRevise)},
            {"user", "Question:\n" + user_task + "\n\nYour previous answer:\n" +
                         current_response + "\n\nFeedback:\n" + critique},
        };
        current_response = traced_chat(ctx, revise_messages, out.trace);
    }
    if (!satisfied) exhausted = true;

    set_answer(out, current_response);
    out.final_response = current_response;
    out.budget_exhausted = exhausted;
    return out;
}

// ---------------------------------------------------------------------------
// ReCode

namespace {

std::string extract_code(const std::string& response) {
    size_t open = response.find("```");
    if (open == std::string::npos) return response;
    size_t body_start = response.find('\n', open);
    if (body_start == std::string::npos) return response;
    ++body_start;
    size_t close = response.find("```", body_start);
    if (close == std::string::npos) return response.substr(body_start);
    return response.substr(body_start, close - body_start);
}

struct DefInfo {
    std::string name;
    bool placeholder = false;
};

// Top-level function definitions and whether their body carries # PLACEHOLDER.
std::vector<DefInfo> scan_defs(const std::string& code) {
    static const std::regex def_line(R"(^def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\()");
    std::vector<std::string> lines = split_lines(code);
    std::vector<DefInfo> defs;
    std::vector<std::pair<size_t, std::string>> starts;
    for (size_t i = 0; i < lines.size(); ++i) {
        std::smatch m;
        if (std::regex_search(lines[i], m, def_line)) {
            starts.emplace_back(i, m[1].str());
        }
    }
    for (size_t k = 0; k < starts.size(); ++k) {
        size_t begin = starts[k].first;
        size_t end = (k + 1 < starts.size()) ? starts[k + 1].first : lines.size();
        DefInfo info;
        info.name = starts[k].second;
        for (size_t i = begin; i < end; ++i) {
            if (lines[i].find("# PLACEHOLDER") != std::string::npos) {
                info.placeholder = true;
                break;
            }
        }
        defs.push_back(std::move(info));
    }
    return defs;
}

const char* kProgramDriver =
    "\n\nif __name__ == \"__main__\":\n"
    "    _result = solve()\n"
    "    if _result is not None:\n"
    "        print(_result)\n";

}  // namespace

ParadigmOutcome run_recode(const Task& task, ExecContext& ctx) {
    require_tools(ctx, "recode");
    ParadigmOutcome out;
    const int budget = ctx.config.recode_max_lm_calls;
    const std::string user_task = render_task_user_message(task);

    std::vector<ChatMessage> gen_messages = {
        {"system", ctx.config.prompts.get(PromptKind::RecodeGenerate)},
        {"user", user_task},
    };
    std::string gen_response = traced_chat(ctx, gen_messages, out.trace);
    int llm_calls = 1;

    std::vector<std::string> parts = {extract_code(gen_response)};
    auto assemble = [&]() {
        std::string program;
        for (const auto& p : parts) {
            program += p;
            if (!program.empty() && program.back() != '\n') program += "\n";
            program += "\n";
        }
        return program;
    };

    // breadth-first decomposition over unimplemented placeholders
    std::deque<std::pair<std::string, int>> queue;
    std::set<std::string> queued;
    auto enqueue_placeholders = [&](const std::string& code, int depth) {
        for (const DefInfo& def : scan_defs(code)) {
            if (def.placeholder && !queued.count(def.name)) {
                queue.emplace_back(def.name, depth);
                queued.insert(def.name);
            }
        }
    };
    enqueue_placeholders(parts[0], 1);

    while (!queue.empty()) {
        auto [name, depth] = queue.front();
        queue.pop_front();
        if (depth > ctx.config.recode_max_depth) {
            trace_note(out.trace, "decomposition depth cap reached at " + name);
            out.budget_exhausted = true;
            continue;
        }
        if (llm_calls >= budget - 1) {  // reserve the extract call
            trace_note(out.trace, "LM call budget reached before implementing " + name);
            out.budget_exhausted = true;
            break;
        }
        std::vector<ChatMessage> dec_messages = {
            {"system", render_template(ctx.config.prompts.get(PromptKind::RecodeDecompose),
                                       {{"func_name", name}})},
            {"user", "Problem:\n" + user_task + "\n\nCurrent program:\n```python\n" + assemble() +
                         "```\n\nImplement " + name + "."},
        };
        std::string dec_response = traced_chat(ctx, dec_messages, out.trace);
        ++llm_calls;
        std::string code = extract_code(dec_response);
        parts.push_back(code);
        enqueue_placeholders(code, depth + 1);
    }

    std::string program = assemble() + kProgramDriver;

    // Bridge shim calls proxy to the registry; errors surface as observations
    // and are rethrown after the program finishes so the child never leaks.
    std::exception_ptr bridge_error;
    tools::BridgeHandler handler = [&](const std::string& tool,
                                       const std::string& input) -> std::string {
        try {
            tools::ToolResult tr = ctx.tools->invoke(tool, input);
            if (ctx.tools->has(tool)) {
                trace_tool(out.trace, tool, input, tr);
            } else {
                trace_note(out.trace, tr.output);
            }
            return tr.output;
        } catch (...) {
            if (!bridge_error) bridge_error = std::current_exception();
            return "bridge error";
        }
    };
    ProgramRunner runner = ctx.program_runner;
    if (!runner) {
        runner = [&ctx](const std::string& p, const tools::BridgeHandler& h) {
            return ctx.tools->run_program(p, h);
        };
    }
    tools::ToolResult run = runner(program, handler);
    if (bridge_error) std::rethrow_exception(bridge_error);
    trace_tool(out.trace, "code_exec", program, run);

    std::vector<ChatMessage> extract_messages = {
        {"system", ctx.config.prompts.get(PromptKind::RecodeExtract)},
        {"user", "Problem:\n" + user_task + "\n\nExecution output:\n" + run.output},
    };
    std::string extract_response = traced_chat(ctx, extract_messages, out.trace);

    set_answer(out, extract_response);
    out.final_response = "```python\n" + program + "```";
    return out;
}

ParadigmOutcome run_paradigm(ParadigmId paradigm, const Task& task, ExecContext& ctx) {
    switch (paradigm) {
        case ParadigmId::Direct: return run_direct(task, ctx);
        case ParadigmId::CoT: return run_cot(task, ctx);
        case ParadigmId::ReAct: return run_react(task, ctx);
        case ParadigmId::PlanExecute: return run_plan_execute(task, ctx);
        case ParadigmId::Reflection: return run_reflection(task, ctx);
        case ParadigmId::ReCode: return run_recode(task, ctx);
    }
    throw std::runtime_error("unknown paradigm");
}

}  // namespace pb
