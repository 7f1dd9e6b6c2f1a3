// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/engine.hpp"
#include "vista/trace.hpp"

namespace vista {

/// The question a recorded session ran on, from its session_start event.
/// Throws SchemaError.
VisualQuestion recorded_question(const RunTrace& trace);

/// Registry with the same specs as `base` whose backends serve the tool
/// outputs recorded in `trace`.
ToolRegistry replay_registry(const RunTrace& trace, const ToolRegistry& base);

/// Re-executes an agent or baseline trace with its recorded oracle replies,
/// tool outputs, timestamps and session id, then compares the result event
/// by event. `config` supplies graph, templates and exemplars; its oracle,
/// registry backends, cache and clock are replaced. Throws ReplayDivergence
/// with the index of the first differing event, or PreconditionError for
/// human traces.
RunResult replay(const RunTrace& trace, SessionConfig config);

} // namespace vista
