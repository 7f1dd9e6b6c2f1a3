// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/exemplars.hpp"
#include "vista/graph.hpp"
#include "vista/memory.hpp"
#include "vista/oracle.hpp"
#include "vista/prompting.hpp"
#include "vista/tools.hpp"
#include "vista/trace.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vista {

enum class Mode { Constrained, Unconstrained };
std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view name);

inline constexpr std::size_t kDefaultMaxSteps = 20;

/// Everything one run needs. The shared inputs are immutable and may be
/// shared by concurrent sessions.
struct SessionConfig {
    std::shared_ptr<const TransitionGraph> graph;
    Mode mode = Mode::Constrained;
    std::size_t exemplar_budget = kDefaultExemplarBudget;
    std::size_t max_steps = kDefaultMaxSteps;
    bool step_guard = true; // off: only the traversed-set exclusion bounds a run
    std::shared_ptr<OracleBackend> oracle;
    std::shared_ptr<const ToolRegistry> registry;
    std::shared_ptr<const ExemplarStore> exemplars;
    std::shared_ptr<const TemplateSet> templates;
    std::shared_ptr<ToolCache> cache; // optional
    std::size_t prompt_budget = kDefaultPromptBudget;
    Clock clock;            // defaults to the wall clock
    std::string session_id; // defaults to a hash of the question and mode
};

/// Throws PreconditionError naming the first missing or invalid field.
void validate_config(const SessionConfig& config);

enum class RunStatus { Answered, NoAnswer, StepLimitExceeded, Error };
std::string_view to_string(RunStatus status);
std::optional<RunStatus> parse_run_status(std::string_view name);

struct RunResult {
    RunStatus status = RunStatus::NoAnswer;
    std::optional<std::string> answer; // present iff Answered
    RunTrace trace;
    std::string error; // message for status Error
};

/// Oracle calls made while serving one engine step, in call order.
using ExchangeLog = std::vector<OracleExchange>;

struct PlanResult {
    PlannerDecision decision;
    FeasibleActionSet feasible;
    std::size_t attempts = 1;
};

/// Feasible actions at the memory's current state under the config's mode.
FeasibleActionSet current_actions(const SessionConfig& config, const WorkingMemory& memory);

/// One planner decision: feasible set, exemplars, prompt, oracle, parse, with
/// a single corrective retry. Throws NoFeasibleAction or PlannerParseFailure.
PlanResult plan_step(const SessionConfig& config, const WorkingMemory& memory, ExchangeLog* log = nullptr);

/// Prompt used for a tool output: knowledge reasoner for web and LLM
/// answers, visual reasoner for the rest.
TemplateKind reasoner_template_for(const ToolOutput& output);

ReasonerVerdict reason_step(const SessionConfig& config, const WorkingMemory& memory, const ToolOutput& output,
                            ExchangeLog* log = nullptr);

/// Step-wise agent run. `run` is a loop over `step`.
class AgentSession {
public:
    AgentSession(SessionConfig config, VisualQuestion question);

    /// Advances by one planner decision (the first call also decomposes the
    /// question). Returns false once the run has ended.
    bool step();
    bool done() const noexcept { return done_; }

    const WorkingMemory& memory() const noexcept { return memory_; }
    const RunTrace& trace() const noexcept { return recorder_.trace(); }
    std::size_t planner_calls() const noexcept { return planner_calls_; }

    /// Valid once done(); moves the trace out.
    RunResult result();

private:
    void start();
    void finish(RunStatus status, std::optional<std::string> answer, std::string error = {});
    void act(const PlanResult& plan, ExchangeLog& log);
    void handle_verdict(const ActionId& tool, const std::string& query, const ReasonerVerdict& verdict);
    ToolOutput select_object(ExchangeLog& log, nlohmann::ordered_json& extra);
    std::string image_for(const ActionId& tool) const;

    SessionConfig config_;
    WorkingMemory memory_;
    TraceRecorder recorder_;
    std::size_t planner_calls_ = 0;
    std::size_t tool_calls_ = 0;
    bool started_ = false;
    bool done_ = false;
    RunStatus status_ = RunStatus::NoAnswer;
    std::optional<std::string> answer_;
    std::string error_;
    std::optional<Objects> detected_;
    std::string selected_crop_;
};

RunResult run(const SessionConfig& config, const VisualQuestion& question);

/// Fixed tool order, no planner, one chain-of-thought answer prompt at the
/// end. Throws PreconditionError for an empty pipeline or an unregistered tool.
RunResult run_sequential_baseline(std::span<const ActionId> pipeline, const SessionConfig& config,
                                  const VisualQuestion& question);

/// The three comparison pipelines: captions and VQA, plus detection, plus search.
std::vector<std::vector<ActionId>> standard_baselines();

/// Human-driven session used for trace collection. Unconstrained mode (the
/// default) runs detection up front and lets the person call any tool;
/// constrained mode offers the graph edges of the last tool used.
class HumanSession {
public:
    HumanSession(SessionConfig config, VisualQuestion question);

    const VisualQuestion& question() const noexcept { return memory_.question(); }
    const WorkingMemory& memory() const noexcept { return memory_; }
    const RunTrace& trace() const noexcept { return recorder_.trace(); }
    const std::vector<DetectedObject>& objects() const noexcept { return objects_; }
    bool closed() const noexcept { return closed_; }

    FeasibleActionSet available() const;

    /// Runs a tool for the person. Throws PreconditionError when closed,
    /// UnknownTool when the tool is not available, and BadQuery,
    /// IndexOutOfRange or ToolUnavailable from the call itself.
    ToolOutput act(const ActionId& tool, const std::string& query, std::optional<std::size_t> object_index);

    /// Closes the session. Throws PreconditionError when already closed or
    /// when a success has no answer.
    void finish(bool success, std::optional<std::string> answer);

private:
    SessionConfig config_;
    WorkingMemory memory_;
    TraceRecorder recorder_;
    std::vector<DetectedObject> objects_;
    std::string selected_crop_;
    bool closed_ = false;
};

/// Default session id: "s-" plus a hash of the question, mode and salt.
std::string default_session_id(const VisualQuestion& question, std::string_view mode, std::string_view salt = {});

} // namespace vista
