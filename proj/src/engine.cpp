// SPDX-License-Identifier: Apache-2.0
#include "vista/engine.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace vista {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kObjectDetection = "object_detection";
constexpr std::string_view kObjectSelect = "object_select";
constexpr std::string_view kImageSearch = "image_search";

std::string ask(const SessionConfig& config, OracleTag tag, const std::string& prompt, ExchangeLog* log) {
    OracleRequest request;
    request.prompt = prompt;
    request.tag = tag;
    auto response = complete(*config.oracle, request);
    if (log) log->push_back(OracleExchange{tag, fixture_key(tag, prompt), response, 0});
    return response;
}

ojson take_log(ExchangeLog& log) {
    ojson out = ojson::array();
    for (const auto& x : log) out.push_back(exchange_to_json(x));
    log.clear();
    return out;
}

ojson question_json(const VisualQuestion& q) {
    return ojson{{"id", q.id}, {"image_ref", q.image_ref}, {"question", q.question}};
}

ojson verdict_json(const ActionId& tool, TemplateKind kind, const ReasonerVerdict& v) {
    ojson doc;
    doc["tool"] = tool;
    doc["template"] = to_string(kind);
    doc["kind"] = to_string(v.kind);
    if (v.kind == VerdictKind::Informative) doc["extraction"] = v.extraction;
    if (v.kind == VerdictKind::FinalAnswer) doc["answer"] = v.answer;
    return doc;
}

ojson objects_json(const std::vector<DetectedObject>& objects) {
    return tool_output_to_json(ToolOutput{std::string(kObjectDetection), Objects{objects}})["payload"]["objects"];
}

std::vector<Exemplar> first_n(std::vector<Exemplar> v, std::size_t n) {
    if (v.size() > n) v.resize(n);
    return v;
}

bool retriable(const std::exception& e) {
    return dynamic_cast<const ToolUnavailable*>(&e) || dynamic_cast<const BadQuery*>(&e);
}

} // namespace

std::string_view to_string(Mode mode) { return mode == Mode::Constrained ? "constrained" : "unconstrained"; }

std::optional<Mode> parse_mode(std::string_view name) {
    if (name == "constrained") return Mode::Constrained;
    if (name == "unconstrained") return Mode::Unconstrained;
    return std::nullopt;
}

std::string_view to_string(RunStatus status) {
    switch (status) {
    case RunStatus::Answered: return "Answered";
    case RunStatus::NoAnswer: return "NoAnswer";
    case RunStatus::StepLimitExceeded: return "StepLimitExceeded";
    case RunStatus::Error: return "Error";
    }
    return "Error";
}

std::optional<RunStatus> parse_run_status(std::string_view name) {
    for (auto s : {RunStatus::Answered, RunStatus::NoAnswer, RunStatus::StepLimitExceeded, RunStatus::Error})
        if (to_string(s) == name) return s;
    return std::nullopt;
}

void validate_config(const SessionConfig& config) {
    if (!config.graph) throw PreconditionError("session config has no transition graph");
    if (!config.oracle) throw PreconditionError("session config has no oracle");
    if (!config.registry) throw PreconditionError("session config has no tool registry");
    if (!config.exemplars) throw PreconditionError("session config has no exemplar store");
    if (!config.templates) throw PreconditionError("session config has no templates");
    if (config.max_steps < 1) throw PreconditionError("max_steps must be at least 1");
    if (config.exemplar_budget < 1) throw PreconditionError("exemplar_budget must be at least 1");
}

std::string default_session_id(const VisualQuestion& question, std::string_view mode, std::string_view salt) {
    auto material = fmt::format("{}\n{}\n{}\n{}\n{}", question.id, question.question, question.image_ref, mode, salt);
    return "s-" + text::hash_hex(material).substr(0, 12);
}

FeasibleActionSet current_actions(const SessionConfig& config, const WorkingMemory& memory) {
    const auto& state = memory.current_state();
    FeasibleActionSet raw;
    if (config.mode == Mode::Constrained) {
        raw = feasible_actions(state, *config.graph, memory);
    } else {
        raw = unconstrained_actions(config.registry->names(), memory, state);
        auto graph_actions = config.graph->actions();
        bool answers = std::find(graph_actions.begin(), graph_actions.end(), kAnswerAction) != graph_actions.end();
        if (answers && !memory.traversed(state).contains(std::string(kAnswerAction)))
            raw.actions.emplace_back(kAnswerAction);
    }
    FeasibleActionSet out;
    for (auto& a : raw.actions)
        if (a == kAnswerAction || config.registry->contains(a)) out.actions.push_back(std::move(a));
    return out;
}

PlanResult plan_step(const SessionConfig& config, const WorkingMemory& memory, ExchangeLog* log) {
    auto feasible = current_actions(config, memory);
    if (feasible.empty())
        throw NoFeasibleAction(fmt::format("no feasible action at state {}", memory.current_state()));
    auto exemplars = select_exemplars(*config.exemplars, feasible, config.exemplar_budget);
    auto instructions = config.registry->instructions();
    auto prompt = build_planner_prompt(*config.templates, exemplars, memory, feasible, instructions,
                                       config.prompt_budget);
    auto reply = ask(config, OracleTag::Planner, prompt.text, log);
    try {
        return PlanResult{parse_planner_output(reply, feasible), feasible, 1};
    } catch (const ParseError&) {
    } catch (const UnknownTool&) {
    }
    auto retry = prompt.text + "\n\n" + planner_correction(feasible);
    reply = ask(config, OracleTag::Planner, retry, log);
    try {
        return PlanResult{parse_planner_output(reply, feasible), feasible, 2};
    } catch (const Error& e) {
        throw PlannerParseFailure(fmt::format("planner reply unusable after retry: {}", e.what()));
    }
}

TemplateKind reasoner_template_for(const ToolOutput& output) {
    return is_knowledge_payload(output.payload) ? TemplateKind::ReasonerKnowledge : TemplateKind::ReasonerVisual;
}

ReasonerVerdict reason_step(const SessionConfig& config, const WorkingMemory& memory, const ToolOutput& output,
                            ExchangeLog* log) {
    auto kind = reasoner_template_for(output);
    auto exemplars = first_n(config.exemplars->of_kind(ExemplarKind::Reasoner,
                                                       kind == TemplateKind::ReasonerVisual ? "visual" : "knowledge"),
                             config.exemplar_budget);
    auto prompt = build_reasoner_prompt(*config.templates, kind, exemplars, memory.active_query(),
                                        render_tool_output(output), config.prompt_budget);
    return parse_reasoner_output(ask(config, OracleTag::Reasoner, prompt.text, log));
}

// ---------------------------------------------------------------------------
// AgentSession
// ---------------------------------------------------------------------------

AgentSession::AgentSession(SessionConfig config, VisualQuestion question)
    : config_((validate_config(config), std::move(config))),
      memory_(init_memory(std::move(question))),
      recorder_(config_.session_id.empty()
                    ? default_session_id(memory_.question(), fmt::format("agent-{}", to_string(config_.mode)))
                    : config_.session_id,
                memory_.question().id, TraceMode::Agent, config_.clock) {}

void AgentSession::start() {
    ojson start;
    start["question"] = question_json(memory_.question());
    start["mode"] = to_string(config_.mode);
    start["max_steps"] = config_.max_steps;
    start["step_guard"] = config_.step_guard;
    start["exemplar_budget"] = config_.exemplar_budget;
    recorder_.emit(EventKind::SessionStart, std::move(start));

    ExchangeLog log;
    auto exemplars = first_n(config_.exemplars->of_kind(ExemplarKind::Decomposition), config_.exemplar_budget);
    auto prompt = build_decomposition_prompt(*config_.templates, exemplars, memory_.question().question,
                                             config_.prompt_budget);
    auto reply = ask(config_, OracleTag::Decomposition, prompt.text, &log);
    Decomposition d;
    bool fallback = false;
    try {
        d = parse_decomposition(reply);
    } catch (const ParseError&) {
        d = Decomposition{memory_.question().question, "#"};
        fallback = true;
    }
    memory_.set_decomposition(d.visual, d.knowledge);
    ojson payload;
    payload["visual"] = d.visual;
    payload["knowledge"] = d.knowledge;
    payload["fallback"] = fallback;
    payload["oracle"] = take_log(log);
    recorder_.emit(EventKind::Decomposition, std::move(payload));
}

bool AgentSession::step() {
    if (done_) return false;
    ExchangeLog log;
    try {
        if (!started_) {
            started_ = true;
            start();
        }
        if (current_actions(config_, memory_).empty()) {
            finish(RunStatus::NoAnswer, std::nullopt);
            return false;
        }
        if (config_.step_guard && planner_calls_ >= config_.max_steps) {
            finish(RunStatus::StepLimitExceeded, std::nullopt);
            return false;
        }
        ++planner_calls_;
        auto plan = plan_step(config_, memory_, &log);
        act(plan, log);
    } catch (const ReplayDivergence&) {
        throw;
    } catch (const std::exception& e) {
        ojson payload;
        payload["stage"] = "engine";
        payload["kind"] = error_kind(e);
        payload["message"] = e.what();
        payload["oracle"] = take_log(log);
        recorder_.emit(EventKind::Error, std::move(payload));
        finish(RunStatus::Error, std::nullopt, e.what());
    }
    return !done_;
}

void AgentSession::act(const PlanResult& plan, ExchangeLog& log) {
    const auto& tool = plan.decision.tool;
    auto query = plan.decision.query;
    bool formulated = false;
    const auto state = memory_.current_state();

    if (tool != kAnswerAction && config_.registry->spec(tool).needs_query && text::trim(query).empty()) {
        auto prompt = build_query_formulation_prompt(*config_.templates, memory_, tool,
                                                     config_.registry->instructions(), config_.prompt_budget);
        query = parse_formulated_query(ask(config_, OracleTag::Planner, prompt.text, &log));
        formulated = true;
    }

    ojson decision;
    decision["state"] = state;
    decision["phase"] = memory_.phase() == Phase::Visual ? "visual" : "knowledge";
    decision["feasible"] = plan.feasible.actions;
    decision["tool"] = tool;
    decision["query"] = query;
    decision["attempts"] = plan.attempts;
    decision["formulated"] = formulated;
    decision["oracle"] = take_log(log);
    recorder_.emit(EventKind::PlannerDecision, std::move(decision));

    if (tool == kAnswerAction) {
        auto exemplars = first_n(config_.exemplars->of_kind(ExemplarKind::Reasoner, "knowledge"),
                                 config_.exemplar_budget);
        auto prompt = build_reasoner_prompt(*config_.templates, TemplateKind::ReasonerKnowledge, exemplars,
                                            memory_.active_query(), render_context(memory_), config_.prompt_budget);
        auto verdict = parse_reasoner_output(ask(config_, OracleTag::Reasoner, prompt.text, &log));
        auto payload = verdict_json(tool, TemplateKind::ReasonerKnowledge, verdict);
        payload["oracle"] = take_log(log);
        recorder_.emit(EventKind::ReasonerVerdict, std::move(payload));
        if (verdict.kind == VerdictKind::FinalAnswer) {
            finish(RunStatus::Answered, verdict.answer);
        } else {
            memory_.record_uninformative(tool);
            recorder_.emit(EventKind::Backtrack, ojson{{"state", state}, {"tool", tool}, {"reason", "not_answered"}});
        }
        return;
    }

    auto image = image_for(tool);
    recorder_.emit(EventKind::ToolCall, ojson{{"tool", tool}, {"query", query}, {"image_ref", image}});
    ++tool_calls_;

    ToolOutput output;
    ojson extra = ojson::object();
    try {
        if (tool == kObjectSelect)
            output = select_object(log, extra);
        else
            output = execute_tool(*config_.registry, tool, query, image, config_.cache.get());
    } catch (const Error& e) {
        bool selection_failed = tool == kObjectSelect && (dynamic_cast<const ParseError*>(&e) ||
                                                          dynamic_cast<const IndexOutOfRange*>(&e));
        if (!retriable(e) && !selection_failed) throw;
        ojson err;
        err["stage"] = "tool";
        err["tool"] = tool;
        err["kind"] = error_kind(e);
        err["message"] = e.what();
        err["oracle"] = take_log(log);
        recorder_.emit(EventKind::Error, std::move(err));
        memory_.record_uninformative(tool);
        recorder_.emit(EventKind::Backtrack, ojson{{"state", state}, {"tool", tool}, {"reason", "tool_error"}});
        return;
    }
    if (tool == kObjectDetection)
        if (auto* objs = std::get_if<Objects>(&output.payload)) detected_ = *objs;

    auto out_doc = tool_output_to_json(output);
    for (auto& [k, v] : extra.items()) out_doc[k] = v;
    out_doc["oracle"] = take_log(log);
    recorder_.emit(EventKind::ToolOutput, std::move(out_doc));

    auto verdict = reason_step(config_, memory_, output, &log);
    auto payload = verdict_json(tool, reasoner_template_for(output), verdict);
    payload["oracle"] = take_log(log);
    recorder_.emit(EventKind::ReasonerVerdict, std::move(payload));
    handle_verdict(tool, query, verdict);
}

void AgentSession::handle_verdict(const ActionId& tool, const std::string& query, const ReasonerVerdict& verdict) {
    const auto from = memory_.current_state();
    switch (verdict.kind) {
    case VerdictKind::Uninformative:
        memory_.record_uninformative(tool);
        recorder_.emit(EventKind::Backtrack, ojson{{"state", from}, {"tool", tool}, {"reason", "uninformative"}});
        return;
    case VerdictKind::Informative: {
        memory_.record_informative(tool, verdict.extraction, query);
        ojson change{{"from", from}, {"to", tool}};
        if (memory_.phase() == Phase::Visual && (tool == "web_search" || tool == "llm_qa")) {
            memory_.enter_knowledge_phase(memory_.question().question);
            change["phase"] = "knowledge";
            change["query"] = memory_.active_query();
        }
        recorder_.emit(EventKind::StateChange, std::move(change));
        return;
    }
    case VerdictKind::FinalAnswer: {
        const auto& knowledge = memory_.knowledge_subquestion();
        if (memory_.phase() == Phase::Visual && !knowledge.empty() && text::trim(knowledge) != "#") {
            memory_.record_informative(tool, verdict.answer, query);
            memory_.enter_knowledge_phase(bind_visual_answer(knowledge, verdict.answer));
            recorder_.emit(EventKind::StateChange, ojson{{"from", from},
                                                          {"to", tool},
                                                          {"phase", "knowledge"},
                                                          {"visual_answer", verdict.answer},
                                                          {"query", memory_.active_query()}});
            return;
        }
        finish(RunStatus::Answered, verdict.answer);
        return;
    }
    }
}

ToolOutput AgentSession::select_object(ExchangeLog& log, ojson& extra) {
    if (!detected_ || detected_->objects.empty()) throw ToolUnavailable("no detected objects to select from");
    const auto& objects = detected_->objects;
    auto exemplars = first_n(config_.exemplars->of_kind(ExemplarKind::ObjectSelect), config_.exemplar_budget);
    auto prompt = build_object_select_prompt(*config_.templates, exemplars, memory_.active_query(), objects,
                                             config_.prompt_budget);
    auto choice = parse_object_select(ask(config_, OracleTag::ObjectSelect, prompt.text, &log), objects.size());
    selected_crop_ = objects[choice.index].crop_ref;
    extra["choice"] = choice.index;
    extra["rationale"] = choice.rationale;
    return ToolOutput{std::string(kObjectSelect), Objects{{objects[choice.index]}}};
}

std::string AgentSession::image_for(const ActionId& tool) const {
    if (!config_.registry->spec(tool).needs_image) return {};
    if (tool == kImageSearch && !selected_crop_.empty()) return selected_crop_;
    return memory_.question().image_ref;
}

void AgentSession::finish(RunStatus status, std::optional<std::string> answer, std::string error) {
    if (status == RunStatus::Answered) recorder_.emit(EventKind::FinalAnswer, ojson{{"answer", *answer}});
    ojson end;
    end["status"] = to_string(status);
    if (answer)
        end["answer"] = *answer;
    else
        end["answer"] = nullptr;
    end["planner_calls"] = planner_calls_;
    end["tool_calls"] = tool_calls_;
    if (!error.empty()) end["error"] = error;
    recorder_.emit(EventKind::SessionEnd, std::move(end));
    recorder_.set_outcome(status == RunStatus::Answered ? Outcome::Success : Outcome::Failure, answer);
    status_ = status;
    answer_ = std::move(answer);
    error_ = std::move(error);
    done_ = true;
}

RunResult AgentSession::result() {
    if (!done_) throw PreconditionError("session has not finished");
    return RunResult{status_, answer_, recorder_.take(), error_};
}

RunResult run(const SessionConfig& config, const VisualQuestion& question) {
    AgentSession session(config, question);
    while (session.step()) {
    }
    return session.result();
}

// ---------------------------------------------------------------------------
// Baseline
// ---------------------------------------------------------------------------

std::vector<std::vector<ActionId>> standard_baselines() {
    return {
        {"caption", "vqa"},
        {"caption", "vqa", "object_detection"},
        {"caption", "vqa", "object_detection", "image_search", "web_search"},
    };
}

RunResult run_sequential_baseline(std::span<const ActionId> pipeline, const SessionConfig& config,
                                  const VisualQuestion& question) {
    if (pipeline.empty()) throw PreconditionError("baseline pipeline is empty");
    validate_config(config);
    for (const auto& t : pipeline)
        if (!config.registry->contains(t)) throw PreconditionError("baseline tool '" + t + "' is not registered");
    auto memory = init_memory(question);
    std::vector<ActionId> tools(pipeline.begin(), pipeline.end());
    TraceRecorder recorder(config.session_id.empty()
                               ? default_session_id(question, "baseline", text::join(tools, "+"))
                               : config.session_id,
                           question.id, TraceMode::Baseline, config.clock);
    recorder.emit(EventKind::SessionStart,
                  ojson{{"question", question_json(question)}, {"mode", "baseline"}, {"pipeline", tools}});

    ExchangeLog log;
    RunStatus status = RunStatus::NoAnswer;
    std::optional<std::string> answer;
    std::string error;
    std::size_t calls = 0;
    std::string crop;
    try {
        for (const auto& tool : tools) {
            const auto& spec = config.registry->spec(tool);
            std::string query = spec.needs_query ? question.question : std::string{};
            std::string image;
            if (spec.needs_image) image = (tool == kImageSearch && !crop.empty()) ? crop : question.image_ref;
            recorder.emit(EventKind::ToolCall, ojson{{"tool", tool}, {"query", query}, {"image_ref", image}});
            ++calls;
            try {
                auto output = execute_tool(*config.registry, tool, query, image, config.cache.get());
                if (auto* objs = std::get_if<Objects>(&output.payload); objs && !objs->objects.empty() && crop.empty())
                    crop = objs->objects.front().crop_ref;
                recorder.emit(EventKind::ToolOutput, tool_output_to_json(output));
                memory.record_informative(tool, render_tool_output(output), query);
            } catch (const Error& e) {
                if (!retriable(e)) throw;
                recorder.emit(EventKind::Error, ojson{{"stage", "tool"},
                                                      {"tool", tool},
                                                      {"kind", error_kind(e)},
                                                      {"message", e.what()}});
            }
        }
        auto exemplars = first_n(config.exemplars->of_kind(ExemplarKind::Reasoner, "knowledge"),
                                 config.exemplar_budget);
        auto prompt = build_reasoner_prompt(*config.templates, TemplateKind::ReasonerKnowledge, exemplars,
                                            question.question, render_context(memory), config.prompt_budget);
        auto verdict = parse_reasoner_output(ask(config, OracleTag::Reasoner, prompt.text, &log));
        auto payload = verdict_json(std::string(kAnswerAction), TemplateKind::ReasonerKnowledge, verdict);
        payload["oracle"] = take_log(log);
        recorder.emit(EventKind::ReasonerVerdict, std::move(payload));
        if (verdict.kind == VerdictKind::FinalAnswer) {
            status = RunStatus::Answered;
            answer = verdict.answer;
        }
    } catch (const ReplayDivergence&) {
        throw;
    } catch (const std::exception& e) {
        recorder.emit(EventKind::Error, ojson{{"stage", "engine"},
                                              {"kind", error_kind(e)},
                                              {"message", e.what()},
                                              {"oracle", take_log(log)}});
        status = RunStatus::Error;
        error = e.what();
    }
    if (answer) recorder.emit(EventKind::FinalAnswer, ojson{{"answer", *answer}});
    ojson end;
    end["status"] = to_string(status);
    if (answer)
        end["answer"] = *answer;
    else
        end["answer"] = nullptr;
    end["planner_calls"] = 0;
    end["tool_calls"] = calls;
    if (!error.empty()) end["error"] = error;
    recorder.emit(EventKind::SessionEnd, std::move(end));
    recorder.set_outcome(answer ? Outcome::Success : Outcome::Failure, answer);
    return RunResult{status, answer, recorder.take(), error};
}

// ---------------------------------------------------------------------------
// HumanSession
// ---------------------------------------------------------------------------

HumanSession::HumanSession(SessionConfig config, VisualQuestion question)
    : config_((validate_config(config), std::move(config))),
      memory_(init_memory(std::move(question))),
      recorder_(config_.session_id.empty()
                    ? default_session_id(memory_.question(), fmt::format("human-{}", to_string(config_.mode)))
                    : config_.session_id,
                memory_.question().id, TraceMode::Human, config_.clock) {
    ojson start;
    start["question"] = question_json(memory_.question());
    start["mode"] = "human";
    start["collection"] = to_string(config_.mode);
    if (config_.mode == Mode::Unconstrained && config_.registry->contains(kObjectDetection)) {
        try {
            auto out = execute_tool(*config_.registry, std::string(kObjectDetection), "",
                                    memory_.question().image_ref, config_.cache.get());
            if (auto* objs = std::get_if<Objects>(&out.payload)) objects_ = objs->objects;
        } catch (const ToolUnavailable&) {
        }
        start["objects"] = objects_json(objects_);
    }
    recorder_.emit(EventKind::SessionStart, std::move(start));
}

FeasibleActionSet HumanSession::available() const {
    FeasibleActionSet out;
    if (closed_) return out;
    if (config_.mode == Mode::Constrained) {
        for (auto& a : feasible_actions(memory_.current_state(), *config_.graph, memory_).actions)
            if (a != kAnswerAction && config_.registry->contains(a)) out.actions.push_back(std::move(a));
        return out;
    }
    for (const auto& a : config_.registry->names()) {
        if (a == kObjectDetection) continue;
        if (a == kObjectSelect && objects_.empty()) continue;
        out.actions.push_back(a);
    }
    return out;
}

ToolOutput HumanSession::act(const ActionId& tool, const std::string& query, std::optional<std::size_t> object_index) {
    if (closed_) throw PreconditionError("session is closed");
    if (!available().contains(tool)) throw UnknownTool("tool '" + tool + "' is not available now");
    const auto& spec = config_.registry->spec(tool);
    std::string image;
    if (spec.needs_image)
        image = (tool == kImageSearch && !selected_crop_.empty()) ? selected_crop_ : memory_.question().image_ref;

    ToolOutput output;
    ojson extra = ojson::object();
    if (tool == kObjectSelect) {
        if (!object_index) throw BadQuery("object_select needs an object index");
        if (*object_index >= objects_.size())
            throw IndexOutOfRange(fmt::format("object #{} chosen but only {} detected", *object_index, objects_.size()));
        selected_crop_ = objects_[*object_index].crop_ref;
        output = ToolOutput{tool, Objects{{objects_[*object_index]}}};
        extra["choice"] = *object_index;
    } else {
        output = execute_tool(*config_.registry, tool, query, image, config_.cache.get());
        if (tool == kObjectDetection)
            if (auto* objs = std::get_if<Objects>(&output.payload)) objects_ = objs->objects;
    }
    recorder_.emit(EventKind::ToolCall,
                   ojson{{"tool", tool}, {"query", spec.needs_query ? text::trim(query) : ""}, {"image_ref", image}});
    auto doc = tool_output_to_json(output);
    for (auto& [k, v] : extra.items()) doc[k] = v;
    recorder_.emit(EventKind::ToolOutput, std::move(doc));
    memory_.record_informative(tool, render_tool_output(output), query);
    return output;
}

void HumanSession::finish(bool success, std::optional<std::string> answer) {
    if (closed_) throw PreconditionError("session is already closed");
    if (answer && text::trim(*answer).empty()) answer.reset();
    if (success && !answer) throw PreconditionError("a successful finish needs an answer");
    if (!success) answer.reset();
    if (answer) recorder_.emit(EventKind::FinalAnswer, ojson{{"answer", *answer}});
    ojson end;
    end["status"] = success ? "success" : "failure";
    if (answer)
        end["answer"] = *answer;
    else
        end["answer"] = nullptr;
    end["tool_calls"] = tool_calls(recorder_.trace()).size();
    recorder_.emit(EventKind::SessionEnd, std::move(end));
    recorder_.set_outcome(success ? Outcome::Success : Outcome::Failure, answer);
    closed_ = true;
}

} // namespace vista
