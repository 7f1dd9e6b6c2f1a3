// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vista {

using ActionId = std::string;
using StateId = std::string;

inline constexpr std::string_view kStartState = "START";
/// Reserved terminal action: produce the final answer from the gathered context.
inline constexpr std::string_view kAnswerAction = "answer";
inline constexpr std::string_view kGraphSchema = "vista.graph/v1";

class WorkingMemory;

/// Ordered list of actions the planner may pick from at one decision point.
struct FeasibleActionSet {
    std::vector<ActionId> actions;

    bool contains(std::string_view action) const;
    bool empty() const noexcept { return actions.empty(); }
    std::size_t size() const noexcept { return actions.size(); }

    bool operator==(const FeasibleActionSet&) const = default;
};

/// State/action graph that restricts which tools may follow which.
///
/// A state is named after the action whose output last moved the session
/// forward, plus the reserved START. Edge lists are ordered; that order is
/// what the planner prompt shows. Instances are immutable once built and
/// always satisfy the validation rules enforced by `make`.
class TransitionGraph {
public:
    using EdgeList = std::vector<std::pair<StateId, std::vector<ActionId>>>;

    /// Validates and builds a graph. Throws ValidationError.
    static TransitionGraph make(std::vector<StateId> states, EdgeList edges,
                                std::vector<StateId> terminal);

    const std::vector<StateId>& states() const noexcept { return states_; }
    const std::vector<StateId>& terminal_states() const noexcept { return terminal_; }

    bool has_state(std::string_view state) const;
    bool is_terminal(std::string_view state) const;

    /// Outgoing actions of `state` in stored order. Throws UnknownState.
    const std::vector<ActionId>& edges(std::string_view state) const;

    /// Every distinct action referenced by any edge list, in first-seen order.
    std::vector<ActionId> actions() const;

    /// Sum over states of the number of outgoing actions.
    std::size_t edge_count() const;

    /// Copy with the given actions removed from every edge list and from the
    /// state set. States left without outgoing actions become terminal.
    TransitionGraph without_actions(const std::set<ActionId>& excluded) const;

    bool operator==(const TransitionGraph&) const = default;

private:
    TransitionGraph() = default;

    std::vector<StateId> states_;
    std::map<StateId, std::vector<ActionId>, std::less<>> edges_;
    std::vector<StateId> terminal_;
};

/// Parses and validates a graph document. Throws SchemaError or ValidationError.
TransitionGraph load_graph(std::string_view document);
TransitionGraph load_graph_file(const std::filesystem::path& path);

/// Canonical document form; load_graph(serialize_graph(g)) == g.
std::string serialize_graph(const TransitionGraph& graph);

std::filesystem::path default_graph_path();
TransitionGraph load_default_graph();

/// Graph edges at `state` minus the actions already taken there, order kept.
/// Throws UnknownState.
FeasibleActionSet feasible_actions(std::string_view state, const TransitionGraph& graph,
                                   const WorkingMemory& memory);

/// Graph-free variant: every registered action minus those taken at `state`.
FeasibleActionSet unconstrained_actions(std::span<const ActionId> registered,
                                        const WorkingMemory& memory, std::string_view state);

} // namespace vista
