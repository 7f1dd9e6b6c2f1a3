// SPDX-License-Identifier: Apache-2.0
#include "vista/graph.hpp"

#include "vista/error.hpp"
#include "vista/memory.hpp"
#include "vista/text.hpp"

#include <algorithm>
#include <deque>

#include "json.hpp"

namespace vista {

using ojson = nlohmann::ordered_json;

bool FeasibleActionSet::contains(std::string_view action) const {
    return std::find(actions.begin(), actions.end(), action) != actions.end();
}

TransitionGraph TransitionGraph::make(std::vector<StateId> states, EdgeList edges,
                                      std::vector<StateId> terminal) {
    TransitionGraph g;
    std::set<StateId, std::less<>> declared;
    for (auto& s : states) {
        if (s.empty()) throw ValidationError("graph declares an empty state name");
        if (!declared.insert(s).second) throw ValidationError("graph declares state '" + s + "' twice");
    }
    if (!declared.contains(kStartState)) throw ValidationError("graph has no START state");

    for (auto& [state, actions] : edges) {
        if (!declared.contains(state))
            throw ValidationError("edges listed for undeclared state '" + state + "'");
        if (g.edges_.contains(state))
            throw ValidationError("edges for state '" + state + "' listed twice");
        std::set<ActionId> seen;
        for (const auto& a : actions) {
            if (a.empty()) throw ValidationError("empty action name in edges of '" + state + "'");
            if (a != kAnswerAction && !declared.contains(a))
                throw ValidationError("edge " + state + " -> " + a + " references undeclared action '" +
                                      a + "'");
            if (!seen.insert(a).second)
                throw ValidationError("action '" + a + "' repeated in edges of '" + state + "'");
        }
        g.edges_.emplace(state, std::move(actions));
    }

    std::set<StateId> terminal_set;
    for (const auto& t : terminal) {
        if (!declared.contains(t)) throw ValidationError("terminal state '" + t + "' is not declared");
        if (!terminal_set.insert(t).second) throw ValidationError("terminal state '" + t + "' repeated");
    }

    g.states_ = std::move(states);
    g.terminal_ = std::move(terminal);

    if (g.edges(kStartState).empty()) throw ValidationError("START has no outgoing action");

    // Every non-terminal state reachable from START needs a way forward.
    std::set<StateId> visited{std::string(kStartState)};
    std::deque<StateId> frontier{std::string(kStartState)};
    while (!frontier.empty()) {
        auto s = frontier.front();
        frontier.pop_front();
        const auto& out = g.edges(s);
        if (out.empty() && !g.is_terminal(s))
            throw ValidationError("reachable non-terminal state '" + s + "' has no outgoing action");
        for (const auto& a : out) {
            if (!g.has_state(a)) continue; // bare `answer` ends the run
            if (visited.insert(a).second) frontier.push_back(a);
        }
    }
    return g;
}

bool TransitionGraph::has_state(std::string_view state) const {
    return std::find(states_.begin(), states_.end(), state) != states_.end();
}

bool TransitionGraph::is_terminal(std::string_view state) const {
    return std::find(terminal_.begin(), terminal_.end(), state) != terminal_.end();
}

const std::vector<ActionId>& TransitionGraph::edges(std::string_view state) const {
    static const std::vector<ActionId> none;
    if (!has_state(state)) throw UnknownState("unknown state '" + std::string(state) + "'");
    auto it = edges_.find(state);
    return it == edges_.end() ? none : it->second;
}

std::vector<ActionId> TransitionGraph::actions() const {
    std::vector<ActionId> out;
    for (const auto& s : states_) {
        auto it = edges_.find(s);
        if (it == edges_.end()) continue;
        for (const auto& a : it->second)
            if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    }
    return out;
}

std::size_t TransitionGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& [_, actions] : edges_) n += actions.size();
    return n;
}

TransitionGraph TransitionGraph::without_actions(const std::set<ActionId>& excluded) const {
    if (excluded.contains(std::string(kStartState))) throw ValidationError("cannot remove START");
    std::vector<StateId> states;
    EdgeList kept_edges;
    std::vector<StateId> terminal;
    for (const auto& s : states_) {
        if (excluded.contains(s)) continue;
        states.push_back(s);
        std::vector<ActionId> kept;
        for (const auto& a : this->edges(s))
            if (!excluded.contains(a)) kept.push_back(a);
        if (kept.empty() || is_terminal(s)) terminal.push_back(s);
        if (!kept.empty()) kept_edges.emplace_back(s, std::move(kept));
    }
    return make(std::move(states), std::move(kept_edges), std::move(terminal));
}

namespace {

std::vector<std::string> string_list(const ojson& doc, const char* key) {
    if (!doc.contains(key)) throw SchemaError(std::string("graph document lacks '") + key + "'");
    const auto& v = doc.at(key);
    if (!v.is_array()) throw SchemaError(std::string("graph field '") + key + "' must be a list");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string())
            throw SchemaError(std::string("graph field '") + key + "' must hold strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

} // namespace

TransitionGraph load_graph(std::string_view document) {
    ojson doc;
    try {
        doc = ojson::parse(document);
    } catch (const ojson::parse_error& e) {
        throw SchemaError(std::string("graph document is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("graph document must be an object");
    if (!doc.contains("schema") || !doc.at("schema").is_string())
        throw SchemaError("graph document lacks a schema identifier");
    if (doc.at("schema").get<std::string>() != kGraphSchema)
        throw SchemaError("unsupported graph schema '" + doc.at("schema").get<std::string>() + "'");

    auto states = string_list(doc, "states");
    auto terminal = string_list(doc, "terminal");
    if (!doc.contains("edges") || !doc.at("edges").is_object())
        throw SchemaError("graph field 'edges' must be an object");

    TransitionGraph::EdgeList edges;
    for (const auto& [state, list] : doc.at("edges").items()) {
        if (!list.is_array()) throw SchemaError("edges of '" + state + "' must be a list");
        std::vector<ActionId> actions;
        for (const auto& a : list) {
            if (!a.is_string()) throw SchemaError("edges of '" + state + "' must hold strings");
            actions.push_back(a.get<std::string>());
        }
        edges.emplace_back(state, std::move(actions));
    }
    return TransitionGraph::make(std::move(states), std::move(edges), std::move(terminal));
}

TransitionGraph load_graph_file(const std::filesystem::path& path) {
    return load_graph(text::read_file(path));
}

std::string serialize_graph(const TransitionGraph& graph) {
    ojson doc;
    doc["schema"] = kGraphSchema;
    doc["states"] = graph.states();
    ojson edges = ojson::object();
    for (const auto& s : graph.states()) {
        const auto& out = graph.edges(s);
        if (!out.empty()) edges[s] = out;
    }
    doc["edges"] = std::move(edges);
    doc["terminal"] = graph.terminal_states();
    return doc.dump(2) + "\n";
}

std::filesystem::path default_graph_path() {
    return std::filesystem::path(VISTA_DATA_DIR) / "graph" / "default.json";
}

TransitionGraph load_default_graph() { return load_graph_file(default_graph_path()); }

FeasibleActionSet feasible_actions(std::string_view state, const TransitionGraph& graph,
                                   const WorkingMemory& memory) {
    const auto& out = graph.edges(state);
    const auto& taken = memory.traversed(state);
    FeasibleActionSet result;
    for (const auto& a : out)
        if (!taken.contains(a)) result.actions.push_back(a);
    return result;
}

FeasibleActionSet unconstrained_actions(std::span<const ActionId> registered,
                                        const WorkingMemory& memory, std::string_view state) {
    const auto& taken = memory.traversed(state);
    FeasibleActionSet result;
    for (const auto& a : registered)
        if (!taken.contains(a) && !result.contains(a)) result.actions.push_back(a);
    return result;
}

} // namespace vista
