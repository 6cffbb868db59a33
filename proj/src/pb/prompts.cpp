#include "pb/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace pb {

namespace {

// Shared suffix for tool-enabled paradigms: the tool list plus the action
// syntax the loop parser understands.
const char* kToolSuffix =
    "\n\nYou have access to the following tools:\n"
    "{tools}\n"
    "To use a tool, write a single line in this exact form:\n"
    "Action: <tool>[<input>]\n"
    "Use at most one action per message, then wait for the observation before continuing.";

}  // namespace

std::string prompt_file_stem(PromptKind kind) {
    switch (kind) {
        case PromptKind::Direct: return "direct";
        case PromptKind::CoT: return "cot";
        case PromptKind::React: return "react";
        case PromptKind::PlanExecutePlan: return "plan_execute_plan";
        case PromptKind::PlanExecuteExec: return "plan_execute_exec";
        case PromptKind::ReflectionSolve: return "reflection_solve";
        case PromptKind::ReflectionReflect: return "reflection_reflect";
        case PromptKind::ReflectionRevise: return "reflection_revise";
        case PromptKind::RecodeGenerate: return "recode_generate";
        case PromptKind::RecodeDecompose: return "recode_decompose";
        case PromptKind::RecodeExtract: return "recode_extract";
        case PromptKind::SelfRoute: return "self_route";
    }
    return "direct";
}

const std::vector<PromptKind>& all_prompt_kinds() {
    static const std::vector<PromptKind> v = {
        PromptKind::Direct,           PromptKind::CoT,
        PromptKind::React,            PromptKind::PlanExecutePlan,
        PromptKind::PlanExecuteExec,  PromptKind::ReflectionSolve,
        PromptKind::ReflectionReflect, PromptKind::ReflectionRevise,
        PromptKind::RecodeGenerate,   PromptKind::RecodeDecompose,
        PromptKind::RecodeExtract,    PromptKind::SelfRoute,
    };
    return v;
}

std::string default_prompt_template(PromptKind kind) {
    switch (kind) {
        case PromptKind::Direct:
            return "You are a helpful assistant. Answer the question directly and concisely. "
                   "Put your final answer inside \\boxed{}, e.g., \\boxed{42} or \\boxed{Yes}.";
        case PromptKind::CoT:
            return "You are a helpful assistant. Think through the problem step by step before "
                   "giving your final answer. Show your reasoning, then put your final answer "
                   "inside \\boxed{}.";
        case PromptKind::React:
            return std::string(
                       "You are a helpful assistant that can use tools to answer questions. "
                       "For each step, you should: 1) Think about what you need to do next. "
                       "2) If needed, use a tool to gather information. 3) Once you have enough "
                       "information, provide your final answer. Put your final answer inside "
                       "\\boxed{}.") +
                   kToolSuffix;
        case PromptKind::PlanExecutePlan:
            return "First, create a step-by-step plan to solve the problem. Output ONLY the "
                   "plan as a numbered list. Do not solve the problem yet.";
        case PromptKind::PlanExecuteExec:
            return std::string(
                       "You are executing a plan step by step. You have access to tools. After "
                       "completing all steps, put your final answer inside \\boxed{}.") +
                   kToolSuffix;
        case PromptKind::ReflectionSolve:
            return std::string(
                       "Think carefully and use tools when needed to find the answer. Put your "
                       "final answer inside \\boxed{}.") +
                   kToolSuffix;
        case PromptKind::ReflectionReflect:
            return "Examine the following answer and identify any errors. If the answer is "
                   "correct, respond with \"SATISFACTORY\". If there are issues, explain what's "
                   "wrong.";
        case PromptKind::ReflectionRevise:
            return "Your previous answer had issues. Revise based on the feedback. Put your "
                   "final answer inside \\boxed{}.";
        case PromptKind::RecodeGenerate:
            return "Write a Python function solve() that solves the problem. Mark placeholder "
                   "functions with # PLACEHOLDER. Available primitives: web_search(query), "
                   "code_exec(code).";
        case PromptKind::RecodeDecompose:
            return "Implement the placeholder function {func_name}. You may create new "
                   "placeholders if needed.";
        case PromptKind::RecodeExtract:
            return "Given the execution output, extract the final answer. Put it inside "
                   "\\boxed{}.";
        case PromptKind::SelfRoute:
            return "You will be shown a task. Choose the single most suitable reasoning "
                   "paradigm for solving it from this list:\n"
                   "- Direct: free-form answer\n"
                   "- CoT: step-by-step reasoning\n"
                   "- ReAct: thought-action loop with tools\n"
                   "- PlanExecute: plan first, then act with tools\n"
                   "- Reflection: critique and revise\n"
                   "- ReCode: code as reasoning\n"
                   "Do not solve the task. Reply with the paradigm name inside \\boxed{}, "
                   "e.g., \\boxed{Direct}.";
    }
    return "";
}

PromptSet PromptSet::from_dir(const std::string& dir) {
    PromptSet set;
    for (PromptKind kind : all_prompt_kinds()) {
        fs::path p = fs::path(dir) / (prompt_file_stem(kind) + ".txt");
        std::ifstream in(p, std::ios::binary);
        if (!in) continue;
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        // editors append a trailing newline; templates are defined without one
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        set.set_override(kind, text);
    }
    return set;
}

void PromptSet::set_override(PromptKind kind, std::string text) {
    cache_[kind] = std::move(text);
}

const std::string& PromptSet::get(PromptKind kind) const {
    auto it = cache_.find(kind);
    if (it == cache_.end()) {
        it = cache_.emplace(kind, default_prompt_template(kind)).first;
    }
    return it->second;
}

std::string render_tool_list(const std::vector<tools::ToolSpec>& specs) {
    std::string out;
    for (const auto& spec : specs) {
        out += "- " + spec.name + ": " + spec.description + "\n";
    }
    return out;
}

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& vars) {
    std::string out = tmpl;
    for (const auto& [key, value] : vars) {
        const std::string placeholder = "{" + key + "}";
        size_t pos = 0;
        while ((pos = out.find(placeholder, pos)) != std::string::npos) {
            out.replace(pos, placeholder.size(), value);
            pos += value.size();
        }
    }
    return out;
}

}  // namespace pb
