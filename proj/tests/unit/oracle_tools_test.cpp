// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "scenario.hpp"

#include "vista/error.hpp"
#include "vista/oracle.hpp"
#include "vista/tools.hpp"

using namespace vista;

namespace {

OracleRequest req(std::string prompt, OracleTag tag = OracleTag::Planner) {
    OracleRequest r;
    r.prompt = std::move(prompt);
    r.tag = tag;
    return r;
}

std::shared_ptr<ToolBackend> counting_backend(int& calls) {
    return std::make_shared<FunctionToolBackend>([&calls](const ToolRequest& r) {
        ++calls;
        return ToolOutput{r.tool, VqaAnswer{"answer to " + r.query}};
    });
}

ToolRegistry vqa_registry(std::shared_ptr<ToolBackend> backend) {
    ToolRegistry::Builder b;
    b.add(ToolSpec{"vqa", true, true, "ask", BackendKind::Mock}, backend);
    b.add(ToolSpec{"object_select", false, false, "pick", BackendKind::Builtin});
    return b.build();
}

} // namespace

TEST_SUITE("oracle") {
    TEST_CASE("scripted lookup by prompt hash") {
        ScriptedOracle o({make_oracle_fixture(OracleTag::Planner, "prompt p", "Action: vqa")});
        CHECK(complete(o, req("prompt p")) == "Action: vqa");
        CHECK(complete(o, req("  prompt \n p ")) == "Action: vqa");
        CHECK_THROWS_AS(complete(o, req("prompt q")), FixtureMiss);
        CHECK_THROWS_AS(complete(o, req("prompt p", OracleTag::Reasoner)), FixtureMiss);
    }

    TEST_CASE("relaxed lookup matches the step-specific excerpt") {
        auto f = make_oracle_fixture(OracleTag::Planner, "exemplar one\nQuery: q1\nContext: [c]\nAction:", "Action: vqa");
        ScriptedOracle strict({f});
        ScriptedOracle relaxed({f}, FixtureMatch::Relaxed);
        const auto other = "exemplar two\nQuery: q1\nContext: [c]\nAction:";
        CHECK_THROWS_AS(complete(strict, req(other)), FixtureMiss);
        CHECK(complete(relaxed, req(other)) == "Action: vqa");
        CHECK_THROWS_AS(complete(relaxed, req("Query: q2\nContext: [c]\nAction:")), FixtureMiss);
    }

    TEST_CASE("fixture files round-trip") {
        std::vector<OracleFixture> fs = {make_oracle_fixture(OracleTag::Reasoner, "a", "b\nc"),
                                         make_oracle_fixture(OracleTag::LlmQa, "d", "e")};
        CHECK(load_oracle_fixtures(serialize_oracle_fixtures(fs)) == fs);
        CHECK_THROWS_AS(load_oracle_fixtures(R"({"tag":"nope","prompt_hash":"x","response":"y"})"), SchemaError);
    }

    TEST_CASE("replay serves the recording in order") {
        std::vector<OracleExchange> ex = {{OracleTag::Planner, fixture_key(OracleTag::Planner, "p1"), "r1", 0},
                                          {OracleTag::Reasoner, fixture_key(OracleTag::Reasoner, "p2"), "r2", 3}};
        ReplayOracle o(ex);
        CHECK(complete(o, req("p1")) == "r1");
        CHECK(o.remaining() == 1);
        CHECK_THROWS_AS(complete(o, req("other", OracleTag::Reasoner)), ReplayDivergence);
        ReplayOracle again(ex);
        complete(again, req("p1"));
        CHECK(complete(again, req("p2", OracleTag::Reasoner)) == "r2");
        CHECK_THROWS_AS(complete(again, req("p3")), ReplayDivergence);
    }

    TEST_CASE("complete validates requests and output budgets") {
        FunctionOracle o([](const OracleRequest&) { return std::string("one two three"); });
        CHECK_THROWS_AS(complete(o, req("")), PreconditionError);
        auto r = req("p");
        r.max_output = 2;
        CHECK_THROWS_AS(complete(o, r), BudgetExceeded);
        r.max_output = 3;
        CHECK(complete(o, r) == "one two three");
    }
}

TEST_SUITE("tools") {
    TEST_CASE("rendering") {
        ImageSearchResult r;
        r.entities.push_back(Entity{"Stockholm City Hall", "", "", 96.1});
        CHECK(render_tool_output({"image_search", r}) == "[\n  Stockholm City Hall (score=96.1),\n]");
        CHECK(render_tool_output({"image_search", ImageSearchResult{}}) == "[]");
        CHECK(render_tool_output({"caption", Caption{""}}) == "[]");
        WebSearchResult w({Snippet{"XA", "Built in 1942."}, Snippet{"", "Shaft drive."}}, std::nullopt, {});
        CHECK(render_tool_output({"web_search", w}) == "[\n  XA: Built in 1942.,\n  Shaft drive.,\n]");
        Objects o{{DetectedObject{{0, 0, 1, 1}, "c", "person", 1.0}}};
        CHECK(render_tool_output({"object_detection", o}) == "[\n  Object #0: person (score=1.0),\n]");
    }

    TEST_CASE("related questions are capped at five") {
        WebSearchResult w({}, "panel", {"1", "2", "3", "4", "5", "6", "7"});
        CHECK(w.related_questions().size() == kMaxRelatedQuestions);
        CHECK(w.related_questions().back() == "5");
    }

    TEST_CASE("every payload kind survives JSON") {
        std::vector<ToolOutput> outs = {
            {"caption", Caption{"c"}},
            {"vqa", VqaAnswer{"v"}},
            {"object_detection", Objects{{DetectedObject{{1, 2, 3, 4}, "x#box0", "dog", std::nullopt}}}},
            {"image_search", ImageSearchResult{{Entity{"e", "k", "d", 0.5}}, {"p"}, {"s"}, {"i"}}},
            {"ocr", OcrText{{ScoredText{"STOP", 0.9}}}},
            {"web_search", WebSearchResult({Snippet{"t", "c"}}, "kp", {"q"})},
            {"llm_qa", LlmAnswer{"l"}},
        };
        for (const auto& o : outs) CHECK(tool_output_from_json(tool_output_to_json(o)) == o);
        CHECK(is_knowledge_payload(outs[5].payload));
        CHECK_FALSE(is_knowledge_payload(outs[3].payload));
        CHECK_THROWS_AS(tool_output_from_json(nlohmann::ordered_json::parse(R"({"tool":"x","payload":{"kind":"hologram"}})")),
                        SchemaError);
    }

    TEST_CASE("fixture web_search answers the motorcycle knowledge query") {
        auto ws = testing::motorcycle_workspace();
        auto out = execute_tool(*ws.registry, "web_search", "In what year was Harley-Davidson XA built?", "images/harley.png");
        const auto& w = std::get<WebSearchResult>(out.payload);
        REQUIRE(w.knowledge_panel());
        CHECK(render_tool_output(out).find("1942") != std::string::npos);
    }

    TEST_CASE("query rules and unknown tools") {
        int calls = 0;
        auto reg = vqa_registry(counting_backend(calls));
        CHECK_THROWS_AS(execute_tool(reg, "vqa", "  ", "img.png"), BadQuery);
        CHECK_THROWS_AS(execute_tool(reg, "teleport", "", "img.png"), UnknownTool);
        CHECK_THROWS_AS(execute_tool(reg, "object_select", "", "img.png"), ToolUnavailable);
        CHECK(calls == 0);
    }

    TEST_CASE("cache serves a warmed entry after the backend is gone") {
        int calls = 0;
        auto cache = std::make_shared<ToolCache>();
        auto live = vqa_registry(counting_backend(calls));
        auto first = execute_tool(live, "vqa", "What is it?", "img.png", cache.get());
        auto dead = vqa_registry(std::make_shared<FunctionToolBackend>([](const ToolRequest&) -> ToolOutput {
            throw ToolUnavailable("backend removed");
        }));
        CHECK(execute_tool(dead, "vqa", "what   is it?", "img.png", cache.get()) == first);
        CHECK(calls == 1);
        CHECK_THROWS_AS(execute_tool(dead, "vqa", "What is it?", "other.png", cache.get()), ToolUnavailable);

        testing::TempDir dir("cache");
        cache->save(dir.path() / "cache.jsonl");
        auto loaded = ToolCache::load(dir.path() / "cache.jsonl");
        CHECK(loaded->size() == 1);
        CHECK(execute_tool(dead, "vqa", "What is it?", "img.png", loaded.get()) == first);
    }

    TEST_CASE("mock backend resolves by canonical query") {
        std::vector<ToolFixture> fs = {{"vqa", "What is it?", "a.png", {"vqa", VqaAnswer{"a dog"}}}};
        CHECK(load_tool_fixtures(serialize_tool_fixtures(fs)) == fs);
        MockToolBackend mock(fs);
        CHECK(mock.invoke({"vqa", "what is  it?", "a.png"}).payload == ToolPayload{VqaAnswer{"a dog"}});
        CHECK_THROWS_AS(mock.invoke({"vqa", "what is it?", "b.png"}), ToolUnavailable);
    }

    TEST_CASE("registry filtering") {
        int calls = 0;
        auto reg = vqa_registry(counting_backend(calls));
        CHECK(reg.names() == std::vector<ActionId>{"vqa", "object_select"});
        auto smaller = reg.without({"vqa"});
        CHECK_FALSE(smaller.contains("vqa"));
        CHECK_THROWS_AS(smaller.spec("vqa"), UnknownTool);
        CHECK(reg.instructions().at("vqa") == "ask");
        ToolRegistry::Builder b;
        CHECK_THROWS_AS(b.add(ToolSpec{"vqa", true, true, "ask", BackendKind::Mock}), PreconditionError);
    }

    TEST_CASE("oracle-backed short answers") {
        auto oracle = std::make_shared<FunctionOracle>([](const OracleRequest& r) {
            CHECK(r.tag == OracleTag::LlmQa);
            return std::string("Answer: 1942");
        });
        OracleQaBackend qa(oracle);
        auto out = qa.invoke({"llm_qa", "When?", ""});
        CHECK(std::get<LlmAnswer>(out.payload).text.find("1942") != std::string::npos);
    }
}
