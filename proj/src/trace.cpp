// SPDX-License-Identifier: Apache-2.0
#include "vista/trace.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace vista {

using ojson = nlohmann::ordered_json;

namespace {

constexpr EventKind kAllKinds[] = {
    EventKind::SessionStart,    EventKind::Decomposition, EventKind::PlannerDecision, EventKind::ToolCall,
    EventKind::ToolOutput,      EventKind::ReasonerVerdict, EventKind::Backtrack,     EventKind::StateChange,
    EventKind::FinalAnswer,     EventKind::SessionEnd,    EventKind::Error,
};

std::string iso_millis(std::chrono::system_clock::time_point tp) {
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    return fmt::format("{}.{:03d}Z", buf, static_cast<int>(ms % 1000));
}

std::chrono::system_clock::time_point parse_iso(std::string_view s) {
    std::tm tm{};
    int millis = 0;
    std::string str(s);
    if (std::sscanf(str.c_str(), "%d-%d-%dT%d:%d:%d.%dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                    &tm.tm_min, &tm.tm_sec, &millis) < 6)
        throw PreconditionError("bad timestamp '" + str + "'");
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    auto secs = timegm(&tm);
    return std::chrono::system_clock::from_time_t(secs) + std::chrono::milliseconds(millis);
}

std::string string_or(const ojson& doc, const char* key, std::string fallback = {}) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_string()) return fallback;
    return it->get<std::string>();
}

} // namespace

std::string_view to_string(EventKind kind) {
    switch (kind) {
    case EventKind::SessionStart: return "session_start";
    case EventKind::Decomposition: return "decomposition";
    case EventKind::PlannerDecision: return "planner_decision";
    case EventKind::ToolCall: return "tool_call";
    case EventKind::ToolOutput: return "tool_output";
    case EventKind::ReasonerVerdict: return "reasoner_verdict";
    case EventKind::Backtrack: return "backtrack";
    case EventKind::StateChange: return "state_change";
    case EventKind::FinalAnswer: return "final_answer";
    case EventKind::SessionEnd: return "session_end";
    case EventKind::Error: return "error";
    }
    return "error";
}

std::optional<EventKind> parse_event_kind(std::string_view name) {
    for (auto k : kAllKinds)
        if (to_string(k) == name) return k;
    return std::nullopt;
}

std::string_view to_string(TraceMode mode) {
    switch (mode) {
    case TraceMode::Agent: return "agent";
    case TraceMode::Human: return "human";
    case TraceMode::Baseline: return "baseline";
    }
    return "agent";
}

std::optional<TraceMode> parse_trace_mode(std::string_view name) {
    for (auto m : {TraceMode::Agent, TraceMode::Human, TraceMode::Baseline})
        if (to_string(m) == name) return m;
    return std::nullopt;
}

std::string_view to_string(Outcome outcome) { return outcome == Outcome::Success ? "success" : "failure"; }

Clock system_clock() {
    return [] { return iso_millis(std::chrono::system_clock::now()); };
}

Clock step_clock(std::string_view start) {
    auto base = parse_iso(start);
    auto counter = std::make_shared<std::int64_t>(0);
    return [base, counter] { return iso_millis(base + std::chrono::milliseconds((*counter)++)); };
}

Clock replay_clock(std::vector<std::string> stamps) {
    auto state = std::make_shared<std::pair<std::vector<std::string>, std::size_t>>(std::move(stamps), 0);
    return [state]() -> std::string {
        auto& [v, i] = *state;
        if (v.empty()) return {};
        if (i < v.size()) return v[i++];
        return v.back();
    };
}

TraceRecorder::TraceRecorder(std::string session_id, std::string question_id, TraceMode mode, Clock clock)
    : clock_(clock ? std::move(clock) : system_clock()) {
    trace_.session_id = std::move(session_id);
    trace_.question_id = std::move(question_id);
    trace_.mode = mode;
}

const TraceEvent& TraceRecorder::emit(EventKind kind, ojson payload) {
    TraceEvent e;
    e.seq = trace_.events.size();
    e.at = clock_();
    e.kind = kind;
    e.payload = std::move(payload);
    trace_.events.push_back(std::move(e));
    return trace_.events.back();
}

void TraceRecorder::set_outcome(Outcome outcome, std::optional<std::string> answer) {
    trace_.outcome = outcome;
    trace_.answer = std::move(answer);
}

ojson exchange_to_json(const OracleExchange& exchange) {
    ojson doc;
    doc["tag"] = to_string(exchange.tag);
    doc["prompt_hash"] = exchange.prompt_hash;
    doc["response"] = exchange.response;
    return doc;
}

std::vector<OracleExchange> extract_exchanges(const RunTrace& trace) {
    std::vector<OracleExchange> out;
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const auto& payload = trace.events[i].payload;
        auto it = payload.find("oracle");
        if (it == payload.end() || !it->is_array()) continue;
        for (const auto& x : *it) {
            auto tag = parse_oracle_tag(string_or(x, "tag"));
            if (!tag) throw SchemaError(fmt::format("event {} carries an oracle exchange with a bad tag", i));
            out.push_back(OracleExchange{*tag, string_or(x, "prompt_hash"), string_or(x, "response"), i});
        }
    }
    return out;
}

void validate_trace(const RunTrace& trace) {
    const auto& ev = trace.events;
    if (ev.empty()) throw ValidationError("trace has no events");
    if (ev.front().kind != EventKind::SessionStart) throw ValidationError("trace does not open with session_start");
    if (ev.back().kind != EventKind::SessionEnd) throw ValidationError("trace does not close with session_end");
    for (std::size_t i = 1; i < ev.size(); ++i)
        if (ev[i].seq <= ev[i - 1].seq) throw ValidationError(fmt::format("seq not increasing at event {}", i));
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].kind != EventKind::ToolCall) continue;
        bool answered = false;
        for (std::size_t j = i + 1; j < ev.size(); ++j) {
            if (ev[j].kind == EventKind::ToolOutput || ev[j].kind == EventKind::Error) {
                answered = true;
                break;
            }
            if (ev[j].kind == EventKind::ToolCall) break;
        }
        if (!answered) throw ValidationError(fmt::format("tool_call at event {} has no output or error", i));
    }
}

ojson event_to_json(const TraceEvent& event) {
    ojson doc;
    doc["seq"] = event.seq;
    doc["at"] = event.at;
    doc["kind"] = to_string(event.kind);
    doc["payload"] = event.payload;
    return doc;
}

TraceEvent event_from_json(const ojson& doc) {
    if (!doc.is_object()) throw SchemaError("trace event must be an object");
    TraceEvent e;
    try {
        e.seq = doc.at("seq").get<std::uint64_t>();
        e.at = doc.value("at", std::string{});
        auto kind = parse_event_kind(doc.at("kind").get<std::string>());
        if (!kind) throw SchemaError("unknown event kind '" + doc.at("kind").get<std::string>() + "'");
        e.kind = *kind;
        e.payload = doc.value("payload", ojson::object());
    } catch (const ojson::exception& ex) {
        throw SchemaError(std::string("trace event: ") + ex.what());
    }
    return e;
}

std::string serialize_trace(const RunTrace& trace) {
    ojson header;
    header["schema"] = kTraceSchema;
    header["session_id"] = trace.session_id;
    header["question_id"] = trace.question_id;
    header["mode"] = to_string(trace.mode);
    header["outcome"] = to_string(trace.outcome);
    if (trace.answer)
        header["answer"] = *trace.answer;
    else
        header["answer"] = nullptr;
    std::string out = header.dump() + "\n";
    for (const auto& e : trace.events) out += event_to_json(e).dump() + "\n";
    return out;
}

RunTrace parse_trace(std::string_view document) {
    auto lines = text::split_lines(document);
    RunTrace trace;
    bool have_header = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto where = fmt::format("trace line {}", i + 1);
        ojson doc;
        try {
            doc = ojson::parse(lines[i]);
        } catch (const ojson::parse_error& e) {
            throw SchemaError(where + ": " + e.what());
        }
        if (!have_header) {
            if (!doc.is_object() || string_or(doc, "schema") != kTraceSchema)
                throw SchemaError(where + ": missing or unsupported trace header");
            trace.session_id = string_or(doc, "session_id");
            trace.question_id = string_or(doc, "question_id");
            auto mode = parse_trace_mode(string_or(doc, "mode"));
            if (!mode) throw SchemaError(where + ": unknown trace mode");
            trace.mode = *mode;
            auto outcome = string_or(doc, "outcome");
            if (outcome != "success" && outcome != "failure") throw SchemaError(where + ": unknown outcome");
            trace.outcome = outcome == "success" ? Outcome::Success : Outcome::Failure;
            if (doc.contains("answer") && doc["answer"].is_string()) trace.answer = doc["answer"].get<std::string>();
            have_header = true;
            continue;
        }
        try {
            trace.events.push_back(event_from_json(doc));
        } catch (const SchemaError& e) {
            throw SchemaError(where + ": " + e.what());
        }
    }
    if (!have_header) throw SchemaError("trace document is empty");
    return trace;
}

RunTrace load_trace_file(const std::filesystem::path& path) { return parse_trace(text::read_file(path)); }

TraceStore::TraceStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

void TraceStore::save(const RunTrace& trace) {
    if (trace.session_id.empty()) throw PreconditionError("cannot store a trace without a session id");
    auto file = trace.session_id + ".jsonl";
    ojson idx;
    idx["session_id"] = trace.session_id;
    idx["question_id"] = trace.question_id;
    idx["mode"] = to_string(trace.mode);
    idx["outcome"] = to_string(trace.outcome);
    idx["file"] = file;
    std::lock_guard lock(mutex_);
    text::write_file(dir_ / file, serialize_trace(trace));
    std::ofstream out(dir_ / "manifest.jsonl", std::ios::app);
    if (!out) throw Error("cannot append to " + (dir_ / "manifest.jsonl").string());
    out << idx.dump() << "\n";
}

std::vector<TraceIndexEntry> TraceStore::list() const {
    std::lock_guard lock(mutex_);
    std::vector<TraceIndexEntry> out;
    auto path = dir_ / "manifest.jsonl";
    if (!std::filesystem::exists(path)) return out;
    auto lines = text::split_lines(text::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        ojson doc;
        try {
            doc = ojson::parse(lines[i]);
        } catch (const ojson::parse_error& e) {
            throw SchemaError(fmt::format("trace manifest line {}: {}", i + 1, e.what()));
        }
        TraceIndexEntry entry;
        entry.session_id = string_or(doc, "session_id");
        entry.question_id = string_or(doc, "question_id");
        auto mode = parse_trace_mode(string_or(doc, "mode"));
        if (entry.session_id.empty() || !mode)
            throw SchemaError(fmt::format("trace manifest line {}: bad entry", i + 1));
        entry.mode = *mode;
        entry.outcome = string_or(doc, "outcome") == "success" ? Outcome::Success : Outcome::Failure;
        entry.file = string_or(doc, "file", entry.session_id + ".jsonl");
        auto same = std::find_if(out.begin(), out.end(),
                                 [&](const TraceIndexEntry& e) { return e.session_id == entry.session_id; });
        if (same != out.end())
            *same = std::move(entry);
        else
            out.push_back(std::move(entry));
    }
    return out;
}

std::optional<RunTrace> TraceStore::load(std::string_view session_id) const {
    for (const auto& e : list())
        if (e.session_id == session_id) return load_trace_file(dir_ / e.file);
    return std::nullopt;
}

std::vector<RunTrace> TraceStore::load_all() const {
    std::vector<RunTrace> out;
    for (const auto& e : list()) out.push_back(load_trace_file(dir_ / e.file));
    return out;
}

std::vector<Transition> decision_sequence(const RunTrace& trace) {
    std::vector<Transition> out;
    if (trace.mode == TraceMode::Agent) {
        for (const auto& e : trace.events)
            if (e.kind == EventKind::PlannerDecision)
                out.emplace_back(string_or(e.payload, "state"), string_or(e.payload, "tool"));
        return out;
    }
    StateId prev(kStartState);
    for (auto& tool : tool_calls(trace)) {
        out.emplace_back(prev, tool);
        prev = std::move(tool);
    }
    return out;
}

std::vector<ActionId> tool_calls(const RunTrace& trace) {
    std::vector<ActionId> out;
    for (const auto& e : trace.events)
        if (e.kind == EventKind::ToolCall) out.push_back(string_or(e.payload, "tool"));
    return out;
}

InducedGraph induce_graph(const std::vector<RunTrace>& traces) {
    InducedGraph g;
    std::set<StateId> nodes;
    for (const auto& t : traces)
        for (auto& tr : decision_sequence(t)) {
            nodes.insert(tr.first);
            nodes.insert(tr.second);
            ++g.edge_counts[tr];
        }
    std::map<StateId, std::size_t> row;
    for (const auto& [tr, n] : g.edge_counts) row[tr.first] += n;
    for (const auto& [tr, n] : g.edge_counts)
        g.edge_probs[tr] = static_cast<double>(n) / static_cast<double>(row[tr.first]);
    g.nodes.assign(nodes.begin(), nodes.end());
    return g;
}

TransitionGraph to_transition_graph(const InducedGraph& induced, std::size_t min_count) {
    std::set<StateId> states(induced.nodes.begin(), induced.nodes.end());
    states.insert(std::string(kStartState));
    states.erase(std::string(kAnswerAction));
    std::map<StateId, std::vector<ActionId>> by_state;
    for (const auto& [tr, n] : induced.edge_counts) {
        if (n < min_count) continue;
        by_state[tr.first].push_back(tr.second);
    }
    TransitionGraph::EdgeList edges(by_state.begin(), by_state.end());
    std::vector<StateId> terminal;
    for (const auto& s : states)
        if (by_state.find(s) == by_state.end()) terminal.push_back(s);
    return TransitionGraph::make(std::vector<StateId>(states.begin(), states.end()), std::move(edges),
                                 std::move(terminal));
}

std::map<ActionId, std::size_t> tool_frequency(const std::vector<RunTrace>& traces,
                                               std::optional<std::size_t> position) {
    if (position && *position == 0) throw PreconditionError("tool positions are 1-based");
    std::map<ActionId, std::size_t> out;
    for (const auto& t : traces) {
        auto calls = tool_calls(t);
        if (!position) {
            for (const auto& c : calls) ++out[c];
        } else if (*position <= calls.size()) {
            ++out[calls[*position - 1]];
        }
    }
    return out;
}

std::map<std::size_t, std::size_t> length_distribution(const std::vector<RunTrace>& traces) {
    std::map<std::size_t, std::size_t> out;
    for (const auto& t : traces) ++out[tool_calls(t).size()];
    return out;
}

std::map<std::string, std::size_t> verdict_frequency(const std::vector<RunTrace>& traces) {
    std::map<std::string, std::size_t> out;
    for (const auto& t : traces)
        for (const auto& e : t.events)
            if (e.kind == EventKind::ReasonerVerdict) ++out[string_or(e.payload, "kind")];
    return out;
}

std::string induced_graph_csv(const InducedGraph& graph) {
    std::string out = "state,action,count,probability\n";
    for (const auto& [tr, n] : graph.edge_counts)
        out += fmt::format("{},{},{},{:.6f}\n", tr.first, tr.second, n, graph.edge_probs.at(tr));
    return out;
}

std::string tool_frequency_csv(const std::map<ActionId, std::size_t>& counts) {
    std::string out = "tool,count\n";
    for (const auto& [k, n] : counts) out += fmt::format("{},{}\n", k, n);
    return out;
}

std::string length_distribution_csv(const std::map<std::size_t, std::size_t>& counts) {
    std::string out = "length,count\n";
    for (const auto& [k, n] : counts) out += fmt::format("{},{}\n", k, n);
    return out;
}

std::string verdict_frequency_csv(const std::map<std::string, std::size_t>& counts) {
    std::string out = "verdict,count\n";
    for (const auto& [k, n] : counts) out += fmt::format("{},{}\n", k, n);
    return out;
}

std::optional<std::size_t> first_difference(const RunTrace& a, const RunTrace& b) {
    auto n = std::min(a.events.size(), b.events.size());
    for (std::size_t i = 0; i < n; ++i)
        if (event_to_json(a.events[i]).dump() != event_to_json(b.events[i]).dump()) return i;
    if (a.events.size() != b.events.size()) return n;
    return std::nullopt;
}

} // namespace vista
