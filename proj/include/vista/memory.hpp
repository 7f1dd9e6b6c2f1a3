// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/graph.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace vista {

struct VisualQuestion {
    std::string id;
    std::string image_ref;
    std::string question;
    std::vector<std::string> gold_answers; // evaluation only

    bool operator==(const VisualQuestion&) const = default;
};

/// Throws PreconditionError when the question text or image ref is empty.
void validate_question(const VisualQuestion& question);

inline constexpr std::string_view kInputSource = "input";

struct MemoryEntry {
    std::string source; // an ActionId or "input"
    std::string content;
    std::size_t step_index = 0;
    std::string provenance; // query that produced the entry

    bool operator==(const MemoryEntry&) const = default;
};

enum class Phase { Visual, Knowledge };

/// Evidence gathered during one run plus the bookkeeping backtracking needs.
///
/// Entries are append-only and each per-state traversed set only grows. The
/// current state moves only through record_informative.
class WorkingMemory {
public:
    explicit WorkingMemory(VisualQuestion question);

    const VisualQuestion& question() const noexcept { return question_; }
    const std::string& visual_subquestion() const noexcept { return visual_subquestion_; }
    const std::string& knowledge_subquestion() const noexcept { return knowledge_subquestion_; }
    const std::vector<MemoryEntry>& entries() const noexcept { return entries_; }
    const StateId& current_state() const noexcept { return current_state_; }
    Phase phase() const noexcept { return phase_; }

    /// Query the planner and reasoner work on right now: the visual
    /// sub-question first, then the bound knowledge query.
    const std::string& active_query() const noexcept;

    const std::map<StateId, std::set<ActionId>, std::less<>>& traversed_actions() const noexcept {
        return traversed_;
    }
    const std::set<ActionId>& traversed(std::string_view state) const;

    void set_decomposition(std::string visual, std::string knowledge);
    void enter_knowledge_phase(std::string bound_query);

    /// Appends the extraction and moves to `tool`'s state. The tool is also
    /// marked as taken at the state being left.
    void record_informative(const ActionId& tool, std::string extraction,
                            std::string provenance = {});

    /// Excludes `tool` at the current state; entries and state are untouched.
    void record_uninformative(const ActionId& tool);

    bool operator==(const WorkingMemory&) const = default;

private:
    VisualQuestion question_;
    std::string visual_subquestion_;
    std::string knowledge_subquestion_;
    std::string knowledge_query_;
    std::vector<MemoryEntry> entries_;
    std::map<StateId, std::set<ActionId>, std::less<>> traversed_;
    StateId current_state_;
    Phase phase_ = Phase::Visual;
};

WorkingMemory init_memory(VisualQuestion question);

/// Bracketed, one-entry-per-line rendering of the evidence in step order.
std::string render_context(const WorkingMemory& memory);

} // namespace vista
