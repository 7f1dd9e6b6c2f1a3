// SPDX-License-Identifier: Apache-2.0
#include "vista/memory.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

namespace vista {

void validate_question(const VisualQuestion& question) {
    if (text::trim(question.question).empty())
        throw PreconditionError("visual question '" + question.id + "' has empty question text");
    if (text::trim(question.image_ref).empty())
        throw PreconditionError("visual question '" + question.id + "' has no image ref");
}

WorkingMemory::WorkingMemory(VisualQuestion question)
    : question_(std::move(question)), current_state_(kStartState) {
    visual_subquestion_ = question_.question;
    entries_.push_back(MemoryEntry{std::string(kInputSource), question_.question, 0, {}});
}

const std::string& WorkingMemory::active_query() const noexcept {
    if (phase_ == Phase::Knowledge) return knowledge_query_;
    return visual_subquestion_;
}

const std::set<ActionId>& WorkingMemory::traversed(std::string_view state) const {
    static const std::set<ActionId> empty;
    auto it = traversed_.find(state);
    return it == traversed_.end() ? empty : it->second;
}

void WorkingMemory::set_decomposition(std::string visual, std::string knowledge) {
    visual_subquestion_ = std::move(visual);
    knowledge_subquestion_ = std::move(knowledge);
}

void WorkingMemory::enter_knowledge_phase(std::string bound_query) {
    knowledge_query_ = std::move(bound_query);
    phase_ = Phase::Knowledge;
}

void WorkingMemory::record_informative(const ActionId& tool, std::string extraction,
                                       std::string provenance) {
    if (text::trim(extraction).empty())
        throw PreconditionError("informative extraction for '" + tool + "' is empty");
    traversed_[current_state_].insert(tool);
    entries_.push_back(
        MemoryEntry{tool, std::move(extraction), entries_.size(), std::move(provenance)});
    current_state_ = tool;
}

void WorkingMemory::record_uninformative(const ActionId& tool) {
    traversed_[current_state_].insert(tool);
}

WorkingMemory init_memory(VisualQuestion question) {
    validate_question(question);
    return WorkingMemory(std::move(question));
}

std::string render_context(const WorkingMemory& memory) {
    std::string out = "[\n";
    for (const auto& entry : memory.entries()) {
        auto lines = text::split_lines(text::trim(entry.content));
        for (std::size_t i = 0; i < lines.size(); ++i) {
            out += "  ";
            out += lines[i];
            if (i + 1 == lines.size() && entry.source != kInputSource) {
                out += " (" + entry.source + ")";
            }
            out += '\n';
        }
    }
    out += "]";
    return out;
}

} // namespace vista
