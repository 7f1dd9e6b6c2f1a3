// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/exemplars.hpp"
#include "vista/graph.hpp"
#include "vista/memory.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vista {

struct DetectedObject;

enum class TemplateKind {
    Planner,
    ReasonerVisual,
    ReasonerKnowledge,
    Decomposition,
    ObjectSelect,
    QueryFormulation,
};

std::string_view to_string(TemplateKind kind);
std::optional<TemplateKind> parse_template_kind(std::string_view name);

/// Slot names a skeleton may reference as `{{name}}`.
inline constexpr std::string_view kTemplateSlots[] = {"query", "tools", "context", "exemplars",
                                                      "instruction"};

/// Prompts longer than this many characters raise ContextOverflow.
inline constexpr std::size_t kDefaultPromptBudget = 100000;

struct PromptTemplate {
    TemplateKind kind = TemplateKind::Planner;
    std::string skeleton;

    /// Distinct slot names referenced by the skeleton, in first-use order.
    std::vector<std::string> slots() const;
};

/// One template per kind, immutable after load.
class TemplateSet {
public:
    /// Every kind must be present and reference only known slots. Throws SchemaError.
    static TemplateSet from_skeletons(const std::map<TemplateKind, std::string>& skeletons);

    const PromptTemplate& get(TemplateKind kind) const;

private:
    std::map<TemplateKind, PromptTemplate> templates_;
};

/// Reads a manifest ({"schema", "templates": {kind: file}}) and the files it
/// names, relative to the manifest. A single trailing newline is dropped.
TemplateSet load_templates(const std::filesystem::path& manifest);
std::filesystem::path default_templates_path();

struct Prompt {
    TemplateKind kind = TemplateKind::Planner;
    std::string text;
    std::map<std::string, std::string> slot_digest; // slot -> hash of the filled text

    bool operator==(const Prompt&) const = default;
};

/// Fills every `{{slot}}` in one pass. A referenced slot without a value is a
/// PreconditionError; a result longer than `budget` is a ContextOverflow.
Prompt render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values,
                     std::size_t budget = kDefaultPromptBudget);

/// Exemplar bodies, each followed by one blank line.
std::string render_exemplars(std::span<const Exemplar> exemplars);

/// Action name -> planner-facing description of the tool.
using TaskInstructions = std::map<ActionId, std::string, std::less<>>;

/// "  --name: description" per feasible action.
std::string render_tool_lines(const FeasibleActionSet& actions, const TaskInstructions& instructions);

Prompt build_planner_prompt(const TemplateSet& templates, std::span<const Exemplar> exemplars,
                            const WorkingMemory& memory, const FeasibleActionSet& actions,
                            const TaskInstructions& instructions,
                            std::size_t budget = kDefaultPromptBudget);

/// Note appended to the planner prompt when its first reply was unusable.
std::string planner_correction(const FeasibleActionSet& actions);

struct PlannerDecision {
    ActionId tool;
    std::string query; // empty when the reply named none

    bool operator==(const PlannerDecision&) const = default;
};

/// Reads the token after the last `Action:` and, when present, the text after
/// a following `Query:`. Throws ParseError or UnknownTool.
PlannerDecision parse_planner_output(std::string_view text, const FeasibleActionSet& feasible);
std::string format_planner_decision(const PlannerDecision& decision);

Prompt build_decomposition_prompt(const TemplateSet& templates, std::span<const Exemplar> exemplars,
                                  std::string_view question, std::size_t budget = kDefaultPromptBudget);

struct Decomposition {
    std::string visual;
    std::string knowledge; // may contain '#', the visual answer placeholder

    bool operator==(const Decomposition&) const = default;
};

Decomposition parse_decomposition(std::string_view text);

/// Replaces every '#' in the knowledge question with the visual answer.
std::string bind_visual_answer(std::string_view knowledge_question, std::string_view visual_answer);

Prompt build_object_select_prompt(const TemplateSet& templates, std::span<const Exemplar> exemplars,
                                  std::string_view query, std::span<const DetectedObject> objects,
                                  std::size_t budget = kDefaultPromptBudget);

/// "Object #k [ ... ]" blocks, one per object.
std::string render_object_list(std::span<const DetectedObject> objects);

struct ObjectChoice {
    std::size_t index = 0;
    std::string rationale;

    bool operator==(const ObjectChoice&) const = default;
};

/// Integer after the final "Object #ID is". Throws ParseError or IndexOutOfRange.
ObjectChoice parse_object_select(std::string_view text, std::size_t object_count);

/// `kind` must be ReasonerVisual or ReasonerKnowledge.
Prompt build_reasoner_prompt(const TemplateSet& templates, TemplateKind kind,
                             std::span<const Exemplar> exemplars, std::string_view query,
                             std::string_view rendered_output,
                             std::size_t budget = kDefaultPromptBudget);

Prompt build_query_formulation_prompt(const TemplateSet& templates, const WorkingMemory& memory,
                                      const ActionId& tool, const TaskInstructions& instructions,
                                      std::size_t budget = kDefaultPromptBudget);

/// Text after the last `Query:` marker, or the first non-empty line.
std::string parse_formulated_query(std::string_view text);

enum class VerdictKind { Informative, Uninformative, FinalAnswer };

std::string_view to_string(VerdictKind kind);
std::optional<VerdictKind> parse_verdict_kind(std::string_view name);

/// Classification of one tool output. `extraction` is set for Informative,
/// `answer` for FinalAnswer, neither for Uninformative.
struct ReasonerVerdict {
    VerdictKind kind = VerdictKind::Uninformative;
    std::string extraction;
    std::string answer;

    static ReasonerVerdict informative(std::string extraction);
    static ReasonerVerdict uninformative();
    static ReasonerVerdict final_answer(std::string answer);

    bool operator==(const ReasonerVerdict&) const = default;
};

/// Marker precedence: "not informative" / "cannot be answered" first, then
/// "answer is", else the whole text is an informative extraction.
ReasonerVerdict parse_reasoner_output(std::string_view text);

} // namespace vista
