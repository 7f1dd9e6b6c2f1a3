// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "scenario.hpp"

#include "vista/error.hpp"

using namespace vista;
using namespace vista::testing;

namespace {

// Oracle whose planner and reasoner replies come from small lambdas.
struct Scripted {
    std::function<std::string(const std::string&)> planner = [](const std::string&) { return "Action: caption"; };
    std::function<std::string(const std::string&)> reasoner = [](const std::string&) { return "not informative"; };
    std::string decomposition = "Visual: which object is shown?\nKnowledge: #";

    std::shared_ptr<OracleBackend> make() const {
        return std::make_shared<FunctionOracle>([s = *this](const OracleRequest& r) -> std::string {
            switch (r.tag) {
            case OracleTag::Planner: return s.planner(r.prompt);
            case OracleTag::Reasoner: return s.reasoner(r.prompt);
            case OracleTag::Decomposition: return s.decomposition;
            case OracleTag::ObjectSelect: return "Therefore, the predicted Object #ID is 0.";
            case OracleTag::LlmQa: return "42";
            }
            return {};
        });
    }
};

// First tool offered in the planner prompt's tool list.
std::string first_offered(const std::string& prompt) {
    auto at = prompt.find("  --");
    auto colon = prompt.find(':', at);
    return "Action: " + prompt.substr(at + 4, colon - at - 4);
}

SessionConfig quiet_config(std::uint64_t seed = 1) {
    RandomKnobs knobs;
    knobs.tool_failure = 0.0;
    return random_config(seed, Mode::Constrained, knobs);
}

} // namespace

TEST_SUITE("engine") {
    TEST_CASE("planner step at START") {
        auto cfg = quiet_config();
        Scripted s;
        s.planner = [](const std::string&) { return "Action: object_detection"; };
        cfg.oracle = s.make();
        auto m = init_memory(motorcycle_question());
        auto plan = plan_step(cfg, m);
        CHECK(plan.decision == PlannerDecision{"object_detection", ""});
        CHECK(plan.attempts == 1);
        CHECK(plan.feasible.actions == std::vector<ActionId>{"caption", "vqa", "object_detection"});
    }

    TEST_CASE("no feasible action and unusable replies") {
        auto cfg = quiet_config();
        Scripted s;
        s.planner = [](const std::string&) { return "hmm"; };
        cfg.oracle = s.make();
        auto m = init_memory(motorcycle_question());
        CHECK_THROWS_AS(plan_step(cfg, m), PlannerParseFailure);
        for (auto t : {"caption", "vqa", "object_detection"}) m.record_uninformative(t);
        CHECK_THROWS_AS(plan_step(cfg, m), NoFeasibleAction);
    }

    TEST_CASE("a rejected reply gets one corrective retry") {
        auto cfg = quiet_config();
        Scripted s;
        s.planner = [](const std::string& p) {
            return p.find("could not be used") == std::string::npos ? "Action: web_search" : "Action: vqa";
        };
        cfg.oracle = s.make();
        ExchangeLog log;
        auto plan = plan_step(cfg, init_memory(motorcycle_question()), &log);
        CHECK(plan.decision.tool == "vqa");
        CHECK(plan.attempts == 2);
        CHECK(log.size() == 2);
    }

    TEST_CASE("reasoner verdicts") {
        auto cfg = quiet_config();
        auto m = init_memory(motorcycle_question());
        auto check = [&](std::string reply, ToolOutput out, VerdictKind kind) {
            Scripted s;
            s.reasoner = [reply](const std::string&) { return reply; };
            cfg.oracle = s.make();
            auto v = reason_step(cfg, m, out);
            CHECK(v.kind == kind);
            return v;
        };
        auto elevators = ToolOutput{"web_search", WebSearchResult({Snippet{"Tower", "It has 26 elevators."}}, std::nullopt, {})};
        CHECK(check("The snippet says 26.\nTherefore, the predicted answer is 26.", elevators, VerdictKind::FinalAnswer).answer == "26");
        check("The snail is not a tennis player. Therefore, this query cannot be answered.",
              ToolOutput{"caption", Caption{"a snail on a leaf"}}, VerdictKind::Uninformative);
        check("yes, informative: Monterey Pine hints at the location",
              ToolOutput{"caption", Caption{"a mountain with pines"}}, VerdictKind::Informative);
        CHECK(reasoner_template_for(elevators) == TemplateKind::ReasonerKnowledge);
        CHECK(reasoner_template_for({"caption", Caption{"x"}}) == TemplateKind::ReasonerVisual);
    }

    TEST_CASE("motorcycle run takes four tool actions") {
        auto ws = motorcycle_workspace();
        auto r = run(ws.config(), motorcycle_question());
        CHECK(r.status == RunStatus::Answered);
        CHECK(r.answer == std::optional<std::string>("1942"));
        CHECK(tool_calls(r.trace) == std::vector<ActionId>{"object_detection", "object_select", "image_search", "web_search"});
        CHECK(count_events(r.trace, EventKind::Backtrack) == 0);
        CHECK(r.trace.outcome == Outcome::Success);
    }

    TEST_CASE("exhausting START ends without an answer") {
        auto cfg = quiet_config();
        Scripted s;
        s.planner = first_offered;
        cfg.oracle = s.make();
        AgentSession session(cfg, motorcycle_question());
        while (session.step()) {
        }
        CHECK(session.memory().traversed("START") == std::set<ActionId>{"caption", "vqa", "object_detection"});
        auto r = session.result();
        CHECK(r.status == RunStatus::NoAnswer);
        CHECK_FALSE(r.answer);
        CHECK(count_events(r.trace, EventKind::Backtrack) == 3);
    }

    TEST_CASE("step limit") {
        auto cfg = quiet_config();
        Scripted s;
        s.planner = first_offered;
        s.reasoner = [](const std::string&) { return "Useful: something."; };
        cfg.oracle = s.make();
        cfg.max_steps = 1;
        auto r = run(cfg, motorcycle_question());
        CHECK(r.status == RunStatus::StepLimitExceeded);
        CHECK(r.trace.events.back().payload.at("planner_calls") == 1);
    }

    TEST_CASE("tool failures become backtracks") {
        RandomKnobs knobs;
        knobs.tool_failure = 1.0;
        auto cfg = random_config(3, Mode::Constrained, knobs);
        Scripted s;
        s.planner = first_offered;
        cfg.oracle = s.make();
        auto r = run(cfg, motorcycle_question());
        CHECK(r.status == RunStatus::NoAnswer);
        std::size_t tool_errors = 0;
        for (const auto& e : r.trace.events)
            if (e.kind == EventKind::Backtrack && e.payload.at("reason") == "tool_error") ++tool_errors;
        CHECK(tool_errors == 3);
        CHECK(count_events(r.trace, EventKind::Error) == 3);
    }

    TEST_CASE("visual answer binds into the knowledge query") {
        auto cfg = quiet_config();
        Scripted s;
        s.decomposition = "Visual: which motorcycle is shown?\nKnowledge: In what year was # built?";
        s.planner = [](const std::string& p) {
            return p.find("Harley") == std::string::npos ? "Action: caption" : "Action: web_search\nQuery: year?";
        };
        s.reasoner = [](const std::string& p) {
            return p.find("fact number") == std::string::npos ? "Therefore, the predicted answer is Harley-Davidson XA."
                                                        : "Therefore, the predicted answer is 1942.";
        };
        cfg.oracle = s.make();
        auto r = run(cfg, motorcycle_question());
        CHECK(r.answer == std::optional<std::string>("1942"));
        bool bound = false;
        for (const auto& e : r.trace.events)
            if (e.kind == EventKind::StateChange && e.payload.contains("visual_answer"))
                bound = e.payload.at("query") == "In what year was Harley-Davidson XA built?";
        CHECK(bound);
    }

    TEST_CASE("invalid configuration") {
        SessionConfig empty;
        CHECK_THROWS_AS(validate_config(empty), PreconditionError);
        CHECK_THROWS_AS(run(empty, motorcycle_question()), PreconditionError);
    }
}

TEST_SUITE("baselines") {
    TEST_CASE("caption and vqa") {
        auto cfg = quiet_config();
        Scripted s;
        s.reasoner = [](const std::string&) { return "Therefore, the predicted answer is 1942."; };
        cfg.oracle = s.make();
        std::vector<ActionId> pipe = {"caption", "vqa"};
        auto r = run_sequential_baseline(pipe, cfg, motorcycle_question());
        CHECK(count_events(r.trace, EventKind::ToolCall) == 2);
        CHECK(count_events(r.trace, EventKind::PlannerDecision) == 0);
        CHECK(r.trace.mode == TraceMode::Baseline);
        CHECK(r.answer == std::optional<std::string>("1942"));
    }

    TEST_CASE("full pipeline order and bad pipelines") {
        auto cfg = quiet_config();
        std::vector<ActionId> pipe = {"caption", "vqa", "object_detection", "image_search", "web_search"};
        CHECK(tool_calls(run_sequential_baseline(pipe, cfg, motorcycle_question()).trace) == pipe);
        CHECK(standard_baselines().back() == pipe);
        CHECK_THROWS_AS(run_sequential_baseline(std::vector<ActionId>{}, cfg, motorcycle_question()), PreconditionError);
        CHECK_THROWS_AS(run_sequential_baseline(std::vector<ActionId>{"teleport"}, cfg, motorcycle_question()), PreconditionError);
    }
}

TEST_SUITE("human sessions") {
    TEST_CASE("unconstrained collection detects objects up front") {
        auto ws = motorcycle_workspace();
        auto cfg = ws.config();
        cfg.mode = Mode::Unconstrained;
        HumanSession h(cfg, motorcycle_question());
        CHECK(h.objects().size() == 3);
        CHECK(h.available().contains("web_search"));
        CHECK_FALSE(h.available().contains("object_detection"));
        h.act("object_select", "", 2);
        auto out = h.act("image_search", "", std::nullopt);
        CHECK(render_tool_output(out).find("Harley-Davidson XA") != std::string::npos);
        CHECK_THROWS_AS(h.act("object_select", "", 7), IndexOutOfRange);
        CHECK_THROWS_AS(h.act("web_search", "", std::nullopt), BadQuery);
        h.act("web_search", "In what year was Harley-Davidson XA built?", std::nullopt);
        CHECK_THROWS_AS(h.finish(true, std::nullopt), PreconditionError);
        h.finish(true, "1942");
        CHECK(h.closed());
        CHECK(h.trace().outcome == Outcome::Success);
        CHECK(count_events(h.trace(), EventKind::FinalAnswer) == 1);
        CHECK_THROWS_AS(h.finish(false, std::nullopt), PreconditionError);
        CHECK_THROWS_AS(h.act("caption", "", std::nullopt), PreconditionError);
    }

    TEST_CASE("constrained collection follows the graph") {
        auto ws = motorcycle_workspace();
        auto cfg = ws.config();
        cfg.mode = Mode::Constrained;
        HumanSession h(cfg, motorcycle_question());
        CHECK(h.available().actions == std::vector<ActionId>{"caption", "vqa", "object_detection"});
        CHECK_THROWS_AS(h.act("web_search", "x", std::nullopt), UnknownTool);
        h.act("object_detection", "", std::nullopt);
        CHECK(h.available().actions == std::vector<ActionId>{"object_select"});
        h.finish(false, "ignored");
        CHECK(count_events(h.trace(), EventKind::FinalAnswer) == 0);
        CHECK(h.trace().outcome == Outcome::Failure);
    }
}
