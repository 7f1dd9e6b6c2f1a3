// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "scenario.hpp"

#include "vista/error.hpp"
#include "vista/eval.hpp"
#include "vista/replay.hpp"
#include "vista/text.hpp"

using namespace vista;
using namespace vista::testing;
using ojson = nlohmann::ordered_json;

namespace {

RunTrace human_trace(const std::string& id, const std::vector<std::string>& tools,
                     const std::vector<std::string>& verdicts = {}) {
    TraceRecorder rec(id, "q-" + id, TraceMode::Human, step_clock());
    rec.emit(EventKind::SessionStart, ojson{{"mode", "human"}});
    for (const auto& t : tools) {
        rec.emit(EventKind::ToolCall, ojson{{"tool", t}, {"query", ""}, {"image_ref", "x.png"}});
        rec.emit(EventKind::ToolOutput, ojson{{"tool", t}, {"payload", {{"kind", "caption"}, {"text", "x"}}}});
    }
    for (const auto& v : verdicts) rec.emit(EventKind::ReasonerVerdict, ojson{{"tool", "caption"}, {"kind", v}});
    rec.emit(EventKind::SessionEnd, ojson{{"status", "failure"}});
    return rec.take();
}

DatasetRecord record(std::string id, std::vector<std::string> golds) {
    return DatasetRecord{id, "images/" + id + ".png", "What is the name of this building?", std::move(golds), Split::Custom};
}

} // namespace

TEST_SUITE("trace") {
    TEST_CASE("serialization round-trips and validates") {
        auto ws = motorcycle_workspace();
        auto t = run(ws.config(), motorcycle_question()).trace;
        auto doc = serialize_trace(t);
        auto back = parse_trace(doc);
        CHECK(back == t);
        CHECK(serialize_trace(back) == doc);
        CHECK(text::split_lines(doc).front().find("vista.trace/v1") != std::string::npos);
        CHECK_THROWS_AS(parse_trace("{}"), SchemaError);
        CHECK_THROWS_AS(parse_trace(doc.substr(0, doc.size() / 2)), SchemaError);
    }

    TEST_CASE("sequence numbers must increase") {
        auto t = human_trace("h", {"caption"});
        t.events[1].seq = 0;
        CHECK_THROWS_AS(validate_trace(t), ValidationError);
    }

    TEST_CASE("store lists and reloads traces") {
        TempDir dir("store");
        TraceStore store(dir.path());
        auto a = human_trace("a", {"caption"});
        auto b = human_trace("b", {"vqa"});
        store.save(a);
        store.save(b);
        store.save(a);
        CHECK(store.list().size() == 2);
        CHECK(store.load("b") == std::optional<RunTrace>(b));
        CHECK_FALSE(store.load("zzz"));
        CHECK(store.load_all().size() == 2);
    }
}

TEST_SUITE("analytics") {
    TEST_CASE("induced counts and probabilities") {
        auto g = induce_graph({human_trace("1", {"a", "b"}), human_trace("2", {"a", "c"})});
        CHECK(g.edge_counts.at({"START", "a"}) == 2);
        CHECK(g.edge_counts.at({"a", "b"}) == 1);
        CHECK(g.edge_counts.at({"a", "c"}) == 1);
        CHECK(g.edge_probs.at({"a", "b"}) == 0.5);
        CHECK(induce_graph({}).empty());
        auto single = induce_graph({human_trace("1", {"a", "b", "c"})});
        for (const auto& [tr, p] : single.edge_probs) CHECK(p == 1.0);
        CHECK(induced_graph_csv(g) == "state,action,count,probability\n"
                                      "START,a,2,1.000000\na,b,1,0.500000\na,c,1,0.500000\n");
    }

    TEST_CASE("induced graph converts to a loadable transition graph") {
        auto g = induce_graph({human_trace("1", {"caption", "web_search"}), human_trace("2", {"caption", "llm_qa"})});
        auto tg = to_transition_graph(g);
        CHECK(tg.edges("caption") == std::vector<ActionId>{"llm_qa", "web_search"});
        CHECK(tg.is_terminal("web_search"));
        CHECK(load_graph(serialize_graph(tg)) == tg);
        auto pruned = to_transition_graph(induce_graph({human_trace("1", {"caption"}), human_trace("2", {"caption"}),
                                                        human_trace("3", {"vqa"})}),
                                          2);
        CHECK(pruned.edges("START") == std::vector<ActionId>{"caption"});
    }

    TEST_CASE("tool frequencies") {
        std::vector<RunTrace> ts = {human_trace("1", {"object_select", "image_search"}),
                                    human_trace("2", {"object_select"}), human_trace("3", {"object_select", "vqa"})};
        CHECK(tool_frequency(ts, 1) == std::map<ActionId, std::size_t>{{"object_select", 3}});
        CHECK(tool_frequency(ts, 9).empty());
        CHECK(tool_frequency({ts[0], ts[2]}) ==
              std::map<ActionId, std::size_t>{{"image_search", 1}, {"object_select", 2}, {"vqa", 1}});
        CHECK_THROWS_AS(tool_frequency(ts, 0), PreconditionError);
    }

    TEST_CASE("lengths and verdicts") {
        std::vector<RunTrace> ts = {human_trace("1", {"a", "b", "c", "d", "e"}), human_trace("2", {"a", "b", "c", "d", "e"}),
                                    human_trace("3", {"a", "b", "c"})};
        CHECK(length_distribution(ts) == std::map<std::size_t, std::size_t>{{3, 1}, {5, 2}});
        std::vector<std::string> kinds(8, "Informative");
        kinds.push_back("Uninformative");
        kinds.insert(kinds.end(), 3, "FinalAnswer");
        CHECK(verdict_frequency({human_trace("v", {}, kinds)}) ==
              std::map<std::string, std::size_t>{{"FinalAnswer", 3}, {"Informative", 8}, {"Uninformative", 1}});
        CHECK(length_distribution({}).empty());
        CHECK(verdict_frequency({}).empty());
    }

    TEST_CASE("agent decisions include the answer pseudo-action") {
        TraceRecorder rec("ag", "q", TraceMode::Agent, step_clock());
        rec.emit(EventKind::PlannerDecision, ojson{{"state", "START"}, {"tool", "caption"}});
        rec.emit(EventKind::PlannerDecision, ojson{{"state", "caption"}, {"tool", "answer"}});
        auto t = rec.take();
        CHECK(decision_sequence(t) == std::vector<Transition>{{"START", "caption"}, {"caption", "answer"}});
        CHECK(tool_calls(t).empty());
    }
}

TEST_SUITE("replay") {
    TEST_CASE("agent and baseline traces replay identically") {
        auto ws = motorcycle_workspace();
        auto cfg = ws.config();
        cfg.clock = step_clock();
        auto agent = run(cfg, motorcycle_question()).trace;
        CHECK(serialize_trace(replay(agent, cfg).trace) == serialize_trace(agent));
        std::vector<ActionId> pipe = {"caption", "vqa"};
        auto base = run_sequential_baseline(pipe, cfg, motorcycle_question()).trace;
        CHECK(serialize_trace(replay(base, cfg).trace) == serialize_trace(base));
        auto q = motorcycle_question();
        q.gold_answers.clear();
        CHECK(recorded_question(agent) == q);
    }

    TEST_CASE("a mutated oracle response diverges at that step") {
        auto ws = motorcycle_workspace();
        auto cfg = ws.config();
        auto t = run(cfg, motorcycle_question()).trace;
        std::size_t target = 0;
        for (std::size_t i = 0; i < t.events.size(); ++i)
            if (t.events[i].kind == EventKind::PlannerDecision && target == 0) target = i;
        REQUIRE(target > 0);
        t.events[target].payload["oracle"][0]["response"] = "Action: caption";
        try {
            replay(t, cfg);
            FAIL("replay did not diverge");
        } catch (const ReplayDivergence& e) {
            CHECK(e.event_index() == target);
        }
    }
}

TEST_SUITE("datasets") {
    TEST_CASE("jsonl and tsv") {
        auto recs = parse_dataset(R"({"id":"a","image_ref":"a.png","question":"q?","answers":["x"]}
{"id":"b","image_ref":"b.png","question":"q?","answers":["y","z"],"split":"unseen_entity"}
{"id":"c","image_ref":"c.png","question":"q?","answers":["w"],"split":"val"}
)");
        REQUIRE(recs.size() == 3);
        CHECK(recs[1].split == Split::UnseenEntity);
        CHECK(recs[1].gold_answers == std::vector<std::string>{"y", "z"});
        auto tsv = parse_dataset("id\timage\tquestion\tanswers\nt1\tt.png\tWhat?\tone|two\n", DatasetFormat::Tsv);
        REQUIRE(tsv.size() == 1);
        CHECK(tsv[0].gold_answers == std::vector<std::string>{"one", "two"});
    }

    TEST_CASE("malformed records") {
        CHECK_THROWS_AS(parse_dataset(R"({"id":"a","image_ref":"a.png","question":"q?","answers":[]})"), SchemaError);
        const std::string line = R"({"id":"a","image_ref":"a.png","question":"q?","answers":["x"]})";
        CHECK_THROWS_AS(parse_dataset(line + "\n" + line), SchemaError);
        CHECK_THROWS_AS(parse_dataset(R"({"id":"a","image_ref":"a.png","question":"q?","answers":["x"],"split":"test"})"),
                        SchemaError);
    }
}

TEST_SUITE("metric") {
    TEST_CASE("soft accuracy") {
        CHECK(vqa_accuracy("netball", {"netball", "netball", "netball", "tennis"}) == 1.0);
        std::vector<std::string> ten(9, "tennis");
        ten.push_back("netball");
        CHECK(vqa_accuracy("netball", ten) == 1.0 / 3.0);
        CHECK(vqa_accuracy("golf", ten) == 0.0);
        CHECK_THROWS_AS(vqa_accuracy("x", {}), PreconditionError);
    }

    TEST_CASE("normalization") {
        CHECK(normalize_answer("The Eiffel Tower.") == "eiffel tower");
        CHECK(normalize_answer("3.5") == "3.5");
        CHECK(normalize_answer("10,000") == "10000");
        CHECK(normalize_answer("red,blue") == "red blue");
        CHECK(normalize_answer("don't") == "dont");
    }
}

TEST_SUITE("experiments") {
    TEST_CASE("search ablation") {
        std::vector<DatasetRecord> ds;
        for (int i = 0; i < 5; ++i) ds.push_back(record("r" + std::to_string(i), {"item 1"}));
        ExperimentSpec spec;
        spec.ablation = {"web_search", "image_search", "identical_image_search"};
        spec.workers = 2;
        auto report = run_experiment(ds, random_config(11), spec);
        CHECK(report.label == "agent-constrained w/o Search");
        CHECK(report.traces.size() == 5);
        for (const auto& t : report.traces)
            for (const auto& tool : tool_calls(t)) CHECK_FALSE(spec.ablation.contains(tool));
        CHECK(ablation_label({"caption", "vqa"}) == "w/o VisualQA");
        CHECK(ablation_label({"object_detection", "object_select"}) == "w/o Object");
        CHECK(ablation_label({"ocr", "caption"}) == "w/o caption+ocr");
    }

    TEST_CASE("empty dataset and baseline purity") {
        CHECK(run_experiment({}, random_config(12), {}).rows.empty());
        ExperimentSpec spec;
        spec.pipeline = std::vector<ActionId>{"caption", "vqa"};
        auto report = run_experiment({record("b1", {"x"}), record("b2", {"y"})}, random_config(12), spec);
        for (const auto& t : report.traces) CHECK(count_events(t, EventKind::PlannerDecision) == 0);
        CHECK(report.label == "baseline:caption+vqa");
    }

    TEST_CASE("ablation preconditions") {
        auto cfg = random_config(13);
        CHECK_THROWS_AS(ablate(cfg, {"teleport"}), PreconditionError);
        std::set<ActionId> all(cfg.registry->names().begin(), cfg.registry->names().end());
        CHECK_THROWS_AS(ablate(cfg, all), PreconditionError);
        ExperimentSpec spec;
        spec.pipeline = std::vector<ActionId>{"caption"};
        spec.ablation = {"caption"};
        CHECK_THROWS_AS(run_experiment({record("x", {"y"})}, cfg, spec), PreconditionError);
    }

    TEST_CASE("fixture report") {
        auto ws = motorcycle_workspace();
        auto ds = load_dataset(motorcycle_dir() / "questions.jsonl");
        TempDir dir("report");
        TraceStore store(dir.path());
        ExperimentSpec spec;
        spec.store = &store;
        auto report = run_experiment(ds, ws.config(), spec);
        REQUIRE(report.rows.size() == 2);
        CHECK(report.rows[0].score == 1.0);
        CHECK(report.rows[0].metric == "exact");
        CHECK(report.rows[1].metric == "soft");
        CHECK(store.list().size() == 2);
        auto doc = ojson::parse(serialize_report(report));
        CHECK(doc["schema"] == "vista.report/v1");
        CHECK(doc["summary"]["records"] == 2);
        CHECK(doc["rows"][0]["prediction"] == "1942");
        CHECK(doc["summary"]["mean_accuracy"].get<double>() == doctest::Approx(report.mean));
    }
}
