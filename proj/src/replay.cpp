// SPDX-License-Identifier: Apache-2.0
#include "vista/replay.hpp"

#include "vista/error.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

namespace vista {

using ojson = nlohmann::ordered_json;

VisualQuestion recorded_question(const RunTrace& trace) {
    if (trace.events.empty() || trace.events.front().kind != EventKind::SessionStart)
        throw SchemaError("trace has no session_start event");
    const auto& q = trace.events.front().payload.value("question", ojson::object());
    VisualQuestion out;
    out.id = q.value("id", std::string{});
    out.image_ref = q.value("image_ref", std::string{});
    out.question = q.value("question", std::string{});
    if (out.question.empty()) throw SchemaError("session_start carries no question");
    return out;
}

namespace {

// Serves recorded outputs and re-raises recorded backend failures verbatim.
class RecordedToolBackend final : public ToolBackend {
public:
    static std::string key(std::string_view tool, std::string_view query, std::string_view image_ref) {
        return fmt::format("{}\x1f{}\x1f{}", tool, canonical_query(query), image_ref);
    }

    void add_output(std::string k, ToolOutput out) { outputs_.insert_or_assign(std::move(k), std::move(out)); }
    void add_failure(std::string k, std::string message) { failures_.insert_or_assign(std::move(k), std::move(message)); }

    ToolOutput invoke(const ToolRequest& request) override {
        auto k = key(request.tool, request.query, request.image_ref);
        if (auto it = outputs_.find(k); it != outputs_.end()) return it->second;
        if (auto it = failures_.find(k); it != failures_.end()) throw ToolUnavailable(it->second);
        throw ToolUnavailable(fmt::format("no recorded output for {}", request.tool));
    }

private:
    std::map<std::string, ToolOutput> outputs_;
    std::map<std::string, std::string> failures_;
};

} // namespace

ToolRegistry replay_registry(const RunTrace& trace, const ToolRegistry& base) {
    auto backend = std::make_shared<RecordedToolBackend>();
    const auto& ev = trace.events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].kind != EventKind::ToolCall) continue;
        auto tool = ev[i].payload.value("tool", std::string{});
        if (!base.contains(tool) || base.spec(tool).backend == BackendKind::Builtin) continue;
        const auto& spec = base.spec(tool);
        auto query = spec.needs_query ? ev[i].payload.value("query", std::string{}) : std::string{};
        auto image = spec.needs_image ? ev[i].payload.value("image_ref", std::string{}) : std::string{};
        auto k = RecordedToolBackend::key(tool, query, image);
        for (std::size_t j = i + 1; j < ev.size(); ++j) {
            if (ev[j].kind == EventKind::ToolCall) break;
            if (ev[j].kind == EventKind::ToolOutput) {
                backend->add_output(k, tool_output_from_json(ev[j].payload));
                break;
            }
            if (ev[j].kind == EventKind::Error) {
                if (ev[j].payload.value("kind", std::string{}) == "ToolUnavailable")
                    backend->add_failure(k, ev[j].payload.value("message", std::string{}));
                break;
            }
        }
    }
    ToolRegistry::Builder builder;
    for (const auto& name : base.names()) {
        const auto& spec = base.spec(name);
        builder.add(spec, spec.backend == BackendKind::Builtin ? nullptr : backend);
    }
    return builder.build();
}

RunResult replay(const RunTrace& trace, SessionConfig config) {
    if (trace.mode == TraceMode::Human) throw PreconditionError("human traces cannot be replayed");
    auto question = recorded_question(trace);
    const auto& start = trace.events.front().payload;

    auto oracle = std::make_shared<ReplayOracle>(extract_exchanges(trace));
    config.oracle = oracle;
    if (!config.registry) throw PreconditionError("replay needs the tool specs of a registry");
    config.registry = std::make_shared<const ToolRegistry>(replay_registry(trace, *config.registry));
    config.cache.reset();
    std::vector<std::string> stamps;
    for (const auto& e : trace.events) stamps.push_back(e.at);
    config.clock = replay_clock(std::move(stamps));
    config.session_id = trace.session_id;

    RunResult result;
    if (trace.mode == TraceMode::Agent) {
        if (auto mode = parse_mode(start.value("mode", std::string{}))) config.mode = *mode;
        config.max_steps = start.value("max_steps", config.max_steps);
        config.step_guard = start.value("step_guard", config.step_guard);
        config.exemplar_budget = start.value("exemplar_budget", config.exemplar_budget);
        AgentSession session(config, question);
        try {
            while (session.step()) {
            }
        } catch (const ReplayDivergence& e) {
            // The oracle notices a mismatch only at its next call; point at the earliest differing event.
            auto at = std::min(first_difference(trace, session.trace()).value_or(e.event_index()), e.event_index());
            throw ReplayDivergence(at, fmt::format("replayed event {} differs from the recording: {}", at, e.what()));
        }
        result = session.result();
    } else {
        auto pipeline = start.value("pipeline", std::vector<std::string>{});
        result = run_sequential_baseline(pipeline, config, question);
    }

    if (auto diff = first_difference(trace, result.trace))
        throw ReplayDivergence(*diff, fmt::format("replayed event {} differs from the recording", *diff));
    if (result.trace.outcome != trace.outcome || result.trace.answer != trace.answer)
        throw ReplayDivergence(trace.events.size() - 1, "replayed outcome differs from the recording");
    if (oracle->remaining() != 0)
        throw ReplayDivergence(trace.events.size() - 1,
                               fmt::format("{} recorded oracle replies were not requested", oracle->remaining()));
    return result;
}

} // namespace vista
