#pragma once
// Prompt templates for the six paradigms. Defaults are embedded; each can be
// overridden by a text file (config/prompts/<name>.txt mirrors the defaults).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pb/tools.hpp"

namespace pb {

enum class PromptKind {
    Direct,
    CoT,
    React,
    PlanExecutePlan,
    PlanExecuteExec,
    ReflectionSolve,
    ReflectionReflect,
    ReflectionRevise,
    RecodeGenerate,
    RecodeDecompose,
    RecodeExtract,
    SelfRoute,
};

// File stem used under config/prompts/ (e.g. "react" -> react.txt).
std::string prompt_file_stem(PromptKind kind);
const std::vector<PromptKind>& all_prompt_kinds();

std::string default_prompt_template(PromptKind kind);

// Template store with per-kind file overrides.
class PromptSet {
  public:
    PromptSet() = default;
    // Loads <dir>/<stem>.txt for every kind that has a file there.
    static PromptSet from_dir(const std::string& dir);

    void set_override(PromptKind kind, std::string text);
    const std::string& get(PromptKind kind) const;

  private:
    mutable std::map<PromptKind, std::string> cache_;
};

// "- name: description" lines for the registered tools.
std::string render_tool_list(const std::vector<tools::ToolSpec>& specs);

// Replaces {tools} / {func_name} placeholders.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& vars);

}  // namespace pb
