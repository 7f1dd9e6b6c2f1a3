// SPDX-License-Identifier: Apache-2.0
#include "vista/prompting.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"
#include "vista/tools.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "json.hpp"

namespace vista {

namespace {

constexpr std::string_view kAnswerInstruction =
    "You will give the final answer from the collected context. Please use when the context "
    "already contains the answer.";

bool known_slot(std::string_view name) {
    return std::find(std::begin(kTemplateSlots), std::end(kTemplateSlots), name) != std::end(kTemplateSlots);
}

// Calls fn(literal) and fn_slot(name) in skeleton order.
template <class Lit, class Slot>
void walk_skeleton(std::string_view s, Lit&& literal, Slot&& slot) {
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto open = s.find("{{", pos);
        if (open == std::string_view::npos) break;
        auto close = s.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        literal(s.substr(pos, open - pos));
        slot(std::string(s.substr(open + 2, close - open - 2)));
        pos = close + 2;
    }
    literal(s.substr(std::min(pos, s.size())));
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string rest_of_line(std::string_view s, std::size_t from) {
    auto end = s.find('\n', from);
    return text::trim(s.substr(from, end == std::string_view::npos ? s.size() - from : end - from));
}

std::string strip_terminal_punct(std::string s) {
    while (!s.empty() && (is_space(s.back()) || std::string_view(".,;:!?\"'`*").find(s.back()) != std::string_view::npos))
        s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (is_space(s[b]) || s[b] == ':' || s[b] == '"' || s[b] == '*')) ++b;
    return s.substr(b);
}

} // namespace

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
    case TemplateKind::Planner: return "planner";
    case TemplateKind::ReasonerVisual: return "reasoner_visual";
    case TemplateKind::ReasonerKnowledge: return "reasoner_knowledge";
    case TemplateKind::Decomposition: return "decomposition";
    case TemplateKind::ObjectSelect: return "object_select";
    case TemplateKind::QueryFormulation: return "query_formulation";
    }
    return "planner";
}

std::optional<TemplateKind> parse_template_kind(std::string_view name) {
    for (auto k : {TemplateKind::Planner, TemplateKind::ReasonerVisual, TemplateKind::ReasonerKnowledge,
                   TemplateKind::Decomposition, TemplateKind::ObjectSelect, TemplateKind::QueryFormulation})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

std::vector<std::string> PromptTemplate::slots() const {
    std::vector<std::string> out;
    walk_skeleton(
        skeleton, [](std::string_view) {},
        [&](std::string name) {
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
        });
    return out;
}

TemplateSet TemplateSet::from_skeletons(const std::map<TemplateKind, std::string>& skeletons) {
    TemplateSet set;
    for (auto k : {TemplateKind::Planner, TemplateKind::ReasonerVisual, TemplateKind::ReasonerKnowledge,
                   TemplateKind::Decomposition, TemplateKind::ObjectSelect, TemplateKind::QueryFormulation}) {
        auto it = skeletons.find(k);
        if (it == skeletons.end()) throw SchemaError(fmt::format("template '{}' is missing", to_string(k)));
        PromptTemplate t{k, it->second};
        for (const auto& slot : t.slots())
            if (!known_slot(slot))
                throw SchemaError(fmt::format("template '{}' uses unknown slot '{}'", to_string(k), slot));
        set.templates_.emplace(k, std::move(t));
    }
    return set;
}

const PromptTemplate& TemplateSet::get(TemplateKind kind) const { return templates_.at(kind); }

TemplateSet load_templates(const std::filesystem::path& manifest) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text::read_file(manifest));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("template manifest " + manifest.string() + ": " + e.what());
    }
    if (!doc.is_object() || doc.value("schema", "") != "vista.templates/v1" || !doc.contains("templates") ||
        !doc["templates"].is_object())
        throw SchemaError("template manifest " + manifest.string() + " has an unsupported shape");
    std::map<TemplateKind, std::string> skeletons;
    for (const auto& [name, file] : doc["templates"].items()) {
        auto kind = parse_template_kind(name);
        if (!kind) throw SchemaError("unknown template kind '" + name + "'");
        if (!file.is_string()) throw SchemaError("template '" + name + "' must name a file");
        auto body = text::read_file(manifest.parent_path() / file.get<std::string>());
        if (!body.empty() && body.back() == '\n') body.pop_back();
        skeletons.emplace(*kind, std::move(body));
    }
    return TemplateSet::from_skeletons(skeletons);
}

std::filesystem::path default_templates_path() {
    return std::filesystem::path(VISTA_DATA_DIR) / "templates" / "manifest.json";
}

Prompt render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values,
                     std::size_t budget) {
    Prompt p;
    p.kind = tmpl.kind;
    walk_skeleton(
        tmpl.skeleton, [&](std::string_view lit) { p.text += lit; },
        [&](const std::string& name) {
            auto it = values.find(name);
            if (it == values.end())
                throw PreconditionError(fmt::format("slot '{}' of template '{}' has no value", name,
                                                    to_string(tmpl.kind)));
            p.text += it->second;
            p.slot_digest[name] = text::hash_hex(it->second);
        });
    if (p.text.size() > budget)
        throw ContextOverflow(fmt::format("{} prompt has {} characters, budget is {}", to_string(tmpl.kind),
                                          p.text.size(), budget));
    return p;
}

std::string render_exemplars(std::span<const Exemplar> exemplars) {
    std::string out;
    for (const auto& e : exemplars) {
        std::string_view body = e.body;
        while (!body.empty() && body.back() == '\n') body.remove_suffix(1);
        out += body;
        out += "\n\n";
    }
    return out;
}

std::string render_tool_lines(const FeasibleActionSet& actions, const TaskInstructions& instructions) {
    std::string out;
    for (const auto& a : actions.actions) {
        auto it = instructions.find(a);
        std::string_view desc;
        if (it != instructions.end())
            desc = it->second;
        else if (a == kAnswerAction)
            desc = kAnswerInstruction;
        else
            throw PreconditionError("no task instruction for action '" + a + "'");
        out += fmt::format("  --{}: {}\n", a, desc);
    }
    return out;
}

Prompt build_planner_prompt(const TemplateSet& templates, std::span<const Exemplar> exemplars,
                            const WorkingMemory& memory, const FeasibleActionSet& actions,
                            const TaskInstructions& instructions, std::size_t budget) {
    if (actions.empty()) throw PreconditionError("planner prompt needs at least one action");
    return render_prompt(templates.get(TemplateKind::Planner),
                         {{"query", memory.active_query()},
                          {"tools", render_tool_lines(actions, instructions)},
                          {"context", render_context(memory)},
                          {"exemplars", render_exemplars(exemplars)},
                          {"instruction", ""}},
                         budget);
}

std::string planner_correction(const FeasibleActionSet& actions) {
    return fmt::format("Your previous reply could not be used. Reply with one line \"Action: <tool>\" "
                       "where <tool> is exactly one of: {}. Add \"Query: <question>\" on the next line "
                       "if the tool needs a question.\nAction:",
                       text::join(actions.actions, ", "));
}

PlannerDecision parse_planner_output(std::string_view reply, const FeasibleActionSet& feasible) {
    constexpr std::string_view marker = "Action:";
    auto at = text::rfind_ci(reply, marker);
    if (at == std::string_view::npos) throw ParseError("planner reply has no 'Action:' marker");
    std::size_t pos = at + marker.size();
    while (pos < reply.size() && (reply[pos] == ' ' || reply[pos] == '\t')) ++pos;
    std::size_t end = pos;
    while (end < reply.size() && !is_space(reply[end])) ++end;
    auto token = strip_terminal_punct(std::string(reply.substr(pos, end - pos)));
    if (token.empty()) throw ParseError("planner reply names no tool after 'Action:'");
    if (!feasible.contains(token))
        throw UnknownTool(fmt::format("planner chose '{}', feasible: {}", token, text::join(feasible.actions, ", ")));

    PlannerDecision d{token, {}};
    constexpr std::string_view qmarker = "Query:";
    auto q = text::find_ci(reply, qmarker, end);
    if (q != std::string_view::npos) d.query = rest_of_line(reply, q + qmarker.size());
    return d;
}

std::string format_planner_decision(const PlannerDecision& decision) {
    if (decision.query.empty()) return "Action: " + decision.tool;
    return "Action: " + decision.tool + "\nQuery: " + decision.query;
}

Prompt build_decomposition_prompt(const TemplateSet& templates, std::span<const Exemplar> exemplars,
                                  std::string_view question, std::size_t budget) {
    if (text::trim(question).empty()) throw PreconditionError("cannot decompose an empty question");
    return render_prompt(templates.get(TemplateKind::Decomposition),
                         {{"query", text::trim(question)}, {"exemplars", render_exemplars(exemplars)}}, budget);
}

Decomposition parse_decomposition(std::string_view reply) {
    constexpr std::string_view vmark = "Visual:";
    constexpr std::string_view kmark = "Knowledge:";
    auto v = text::find_ci(reply, vmark);
    if (v == std::string_view::npos) throw ParseError("decomposition has no 'Visual:' line");
    auto k = text::find_ci(reply, kmark, v);
    if (k == std::string_view::npos) throw ParseError("decomposition has no 'Knowledge:' line");
    Decomposition d{rest_of_line(reply.substr(0, k), v + vmark.size()), rest_of_line(reply, k + kmark.size())};
    if (d.visual.empty()) throw ParseError("decomposition has an empty visual sub-question");
    if (d.knowledge.empty()) throw ParseError("decomposition has an empty knowledge sub-question");
    return d;
}

std::string bind_visual_answer(std::string_view knowledge_question, std::string_view visual_answer) {
    return text::replace_all(knowledge_question, "#", visual_answer);
}

std::string render_object_list(std::span<const DetectedObject> objects) {
    std::string out;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (i) out += '\n';
        std::vector<std::string> lines;
        for (const auto& l : text::split_lines(objects[i].label))
            if (auto t = text::trim(l); !t.empty()) lines.push_back("  " + t);
        if (objects[i].score && !lines.empty()) lines.front() += " (score=" + text::format_score(*objects[i].score) + ")";
        if (lines.empty())
            out += fmt::format("Object #{} []", i);
        else
            out += fmt::format("Object #{} [\n{}\n]", i, text::join(lines, "\n"));
    }
    return out;
}

Prompt build_object_select_prompt(const TemplateSet& templates, std::span<const Exemplar> exemplars,
                                  std::string_view query, std::span<const DetectedObject> objects,
                                  std::size_t budget) {
    if (objects.empty()) throw PreconditionError("object selection needs at least one object");
    return render_prompt(templates.get(TemplateKind::ObjectSelect),
                         {{"query", std::string(query)},
                          {"context", render_object_list(objects)},
                          {"exemplars", render_exemplars(exemplars)}},
                         budget);
}

ObjectChoice parse_object_select(std::string_view reply, std::size_t object_count) {
    constexpr std::string_view marker = "Object #ID is";
    auto at = text::rfind_ci(reply, marker);
    if (at == std::string_view::npos) throw ParseError("object selection has no 'Object #ID is' marker");
    auto pos = at + marker.size();
    while (pos < reply.size() && (is_space(reply[pos]) || reply[pos] == '#')) ++pos;
    auto end = pos;
    while (end < reply.size() && std::isdigit(static_cast<unsigned char>(reply[end]))) ++end;
    if (end == pos) throw ParseError("object selection names no id");
    std::size_t index = 0;
    try {
        index = std::stoul(std::string(reply.substr(pos, end - pos)));
    } catch (const std::out_of_range&) {
        throw IndexOutOfRange("object id is out of range");
    }
    if (index >= object_count)
        throw IndexOutOfRange(fmt::format("object #{} chosen but only {} detected", index, object_count));

    auto line_start = reply.rfind('\n', at);
    auto rationale = text::trim(reply.substr(0, line_start == std::string_view::npos ? 0 : line_start));
    if (rationale.empty()) rationale = text::trim(reply.substr(0, at));
    return ObjectChoice{index, rationale};
}

Prompt build_reasoner_prompt(const TemplateSet& templates, TemplateKind kind, std::span<const Exemplar> exemplars,
                             std::string_view query, std::string_view rendered_output, std::size_t budget) {
    if (kind != TemplateKind::ReasonerVisual && kind != TemplateKind::ReasonerKnowledge)
        throw PreconditionError(fmt::format("'{}' is not a reasoner template", to_string(kind)));
    return render_prompt(templates.get(kind),
                         {{"query", std::string(query)},
                          {"context", std::string(rendered_output)},
                          {"exemplars", render_exemplars(exemplars)}},
                         budget);
}

Prompt build_query_formulation_prompt(const TemplateSet& templates, const WorkingMemory& memory,
                                      const ActionId& tool, const TaskInstructions& instructions,
                                      std::size_t budget) {
    return render_prompt(templates.get(TemplateKind::QueryFormulation),
                         {{"query", memory.active_query()},
                          {"tools", render_tool_lines(FeasibleActionSet{{tool}}, instructions)},
                          {"context", render_context(memory)},
                          {"instruction", fmt::format("Write the question to send to {}.", tool)}},
                         budget);
}

std::string parse_formulated_query(std::string_view reply) {
    constexpr std::string_view marker = "Query:";
    auto at = text::rfind_ci(reply, marker);
    if (at != std::string_view::npos) return rest_of_line(reply, at + marker.size());
    for (const auto& line : text::split_lines(reply))
        if (auto t = text::trim(line); !t.empty()) return t;
    return {};
}

std::string_view to_string(VerdictKind kind) {
    switch (kind) {
    case VerdictKind::Informative: return "Informative";
    case VerdictKind::Uninformative: return "Uninformative";
    case VerdictKind::FinalAnswer: return "FinalAnswer";
    }
    return "Uninformative";
}

std::optional<VerdictKind> parse_verdict_kind(std::string_view name) {
    for (auto k : {VerdictKind::Informative, VerdictKind::Uninformative, VerdictKind::FinalAnswer})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

ReasonerVerdict ReasonerVerdict::informative(std::string extraction) {
    return ReasonerVerdict{VerdictKind::Informative, std::move(extraction), {}};
}

ReasonerVerdict ReasonerVerdict::uninformative() { return ReasonerVerdict{VerdictKind::Uninformative, {}, {}}; }

ReasonerVerdict ReasonerVerdict::final_answer(std::string answer) {
    return ReasonerVerdict{VerdictKind::FinalAnswer, {}, std::move(answer)};
}

ReasonerVerdict parse_reasoner_output(std::string_view reply) {
    auto body = text::trim(reply);
    if (body.empty()) return ReasonerVerdict::uninformative();
    if (text::find_ci(body, "not informative") != std::string::npos ||
        text::find_ci(body, "cannot be answered") != std::string::npos)
        return ReasonerVerdict::uninformative();
    for (std::string_view marker : {"predicted answer is", "answer is"}) {
        auto at = text::rfind_ci(body, marker);
        if (at == std::string::npos) continue;
        auto answer = strip_terminal_punct(rest_of_line(body, at + marker.size()));
        if (!answer.empty()) return ReasonerVerdict::final_answer(std::move(answer));
        break;
    }
    return ReasonerVerdict::informative(std::move(body));
}

} // namespace vista
