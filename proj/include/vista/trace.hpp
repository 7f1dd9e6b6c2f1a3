// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/graph.hpp"
#include "vista/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vista {

inline constexpr std::string_view kTraceSchema = "vista.trace/v1";

enum class EventKind {
    SessionStart,
    Decomposition,
    PlannerDecision,
    ToolCall,
    ToolOutput,
    ReasonerVerdict,
    Backtrack,
    StateChange,
    FinalAnswer,
    SessionEnd,
    Error,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view name);

struct TraceEvent {
    std::uint64_t seq = 0;
    std::string at; // informational; analytics order by seq
    EventKind kind = EventKind::SessionStart;
    nlohmann::ordered_json payload = nlohmann::ordered_json::object();

    bool operator==(const TraceEvent&) const = default;
};

enum class TraceMode { Agent, Human, Baseline };
std::string_view to_string(TraceMode mode);
std::optional<TraceMode> parse_trace_mode(std::string_view name);

enum class Outcome { Success, Failure };
std::string_view to_string(Outcome outcome);

struct RunTrace {
    std::string session_id;
    std::string question_id;
    TraceMode mode = TraceMode::Agent;
    std::vector<TraceEvent> events;
    Outcome outcome = Outcome::Failure;
    std::optional<std::string> answer;

    bool operator==(const RunTrace&) const = default;
};

/// Produces the `at` stamp of each event.
using Clock = std::function<std::string()>;

/// UTC wall clock, millisecond ISO-8601.
Clock system_clock();
/// Deterministic clock: `start` plus one millisecond per call.
Clock step_clock(std::string_view start = "2024-01-01T00:00:00.000Z");
/// Hands out `stamps` in order, then repeats the last one.
Clock replay_clock(std::vector<std::string> stamps);

/// Appends events with increasing seq. Not thread-safe; one per session.
class TraceRecorder {
public:
    TraceRecorder(std::string session_id, std::string question_id, TraceMode mode, Clock clock);

    const TraceEvent& emit(EventKind kind, nlohmann::ordered_json payload = nlohmann::ordered_json::object());
    void set_outcome(Outcome outcome, std::optional<std::string> answer);

    const RunTrace& trace() const noexcept { return trace_; }
    RunTrace take() { return std::move(trace_); }

private:
    RunTrace trace_;
    Clock clock_;
};

/// Oracle call as embedded in an event payload under "oracle".
nlohmann::ordered_json exchange_to_json(const OracleExchange& exchange);

/// Every oracle exchange in event order, with event_index filled in.
std::vector<OracleExchange> extract_exchanges(const RunTrace& trace);

/// Structural checks: seq strictly increasing, session_start first,
/// session_end last, each tool_call answered by a tool_output or an error.
/// Throws ValidationError.
void validate_trace(const RunTrace& trace);

nlohmann::ordered_json event_to_json(const TraceEvent& event);
TraceEvent event_from_json(const nlohmann::ordered_json& doc);

/// Header line followed by one event per line.
std::string serialize_trace(const RunTrace& trace);
/// Throws SchemaError with the offending line number.
RunTrace parse_trace(std::string_view document);
RunTrace load_trace_file(const std::filesystem::path& path);

struct TraceIndexEntry {
    std::string session_id;
    std::string question_id;
    TraceMode mode = TraceMode::Agent;
    Outcome outcome = Outcome::Failure;
    std::string file; // relative to the store directory

    bool operator==(const TraceIndexEntry&) const = default;
};

/// Directory of trace files plus a manifest.jsonl index. Safe for
/// concurrent writers within one process.
class TraceStore {
public:
    explicit TraceStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// Writes <session_id>.jsonl and appends an index line; a session saved
    /// twice is replaced in the listing.
    void save(const RunTrace& trace);
    std::vector<TraceIndexEntry> list() const;
    std::optional<RunTrace> load(std::string_view session_id) const;
    std::vector<RunTrace> load_all() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Analytics
// ---------------------------------------------------------------------------

using Transition = std::pair<StateId, ActionId>;

struct InducedGraph {
    std::vector<StateId> nodes; // sorted
    std::map<Transition, std::size_t> edge_counts;
    std::map<Transition, double> edge_probs;

    bool empty() const noexcept { return edge_counts.empty(); }
};

/// The (state, action) decisions of one trace. Agent traces use the state
/// recorded with each planner decision; human and baseline traces pair
/// consecutive entries of START followed by the tool calls.
std::vector<Transition> decision_sequence(const RunTrace& trace);

/// Tool names of the tool_call events, in order.
std::vector<ActionId> tool_calls(const RunTrace& trace);

InducedGraph induce_graph(const std::vector<RunTrace>& traces);

/// States become graph states and every state without outgoing edges is
/// terminal. Edges seen fewer than `min_count` times are dropped.
TransitionGraph to_transition_graph(const InducedGraph& induced, std::size_t min_count = 1);

/// Overall tool call counts, or counts of the k-th call (1-based) per trace.
/// Throws PreconditionError for position 0.
std::map<ActionId, std::size_t> tool_frequency(const std::vector<RunTrace>& traces,
                                               std::optional<std::size_t> position = std::nullopt);

/// Tool calls per trace -> number of traces.
std::map<std::size_t, std::size_t> length_distribution(const std::vector<RunTrace>& traces);

/// Reasoner verdict kind -> count.
std::map<std::string, std::size_t> verdict_frequency(const std::vector<RunTrace>& traces);

std::string induced_graph_csv(const InducedGraph& graph);
std::string tool_frequency_csv(const std::map<ActionId, std::size_t>& counts);
std::string length_distribution_csv(const std::map<std::size_t, std::size_t>& counts);
std::string verdict_frequency_csv(const std::map<std::string, std::size_t>& counts);

/// Event-by-event comparison of the serialized forms; the index of the first
/// difference, or nullopt when equal.
std::optional<std::size_t> first_difference(const RunTrace& a, const RunTrace& b);

} // namespace vista
