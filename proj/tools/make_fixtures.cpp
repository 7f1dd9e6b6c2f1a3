// SPDX-License-Identifier: Apache-2.0
// Records scripted oracle replies against the current templates and exemplars,
// producing the prompt-hash fixture file the scripted oracle serves.
#include "vista/error.hpp"
#include "vista/eval.hpp"
#include "vista/text.hpp"

#include <deque>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

namespace {

using namespace vista;

struct ScriptLine {
    OracleTag tag;
    std::string response;
};

/// Script lines keyed by (question id, run); run is "agent" or "baseline:<tool>,<tool>...".
std::map<std::pair<std::string, std::string>, std::deque<ScriptLine>> load_script(const std::filesystem::path& path) {
    std::map<std::pair<std::string, std::string>, std::deque<ScriptLine>> out;
    auto lines = text::split_lines(text::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto doc = nlohmann::json::parse(lines[i]);
        auto tag = parse_oracle_tag(doc.at("tag").get<std::string>());
        if (!tag) throw SchemaError(fmt::format("script line {}: unknown tag", i + 1));
        auto key = std::make_pair(doc.at("question_id").get<std::string>(), doc.value("run", std::string("agent")));
        out[key].push_back({*tag, doc.at("response").get<std::string>()});
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regenerate scripted oracle fixtures"};
    std::string data_dir = VISTA_DATA_DIR, fixture_dir = "fixtures/motorcycle", output;
    bool check = false;
    app.add_option("--data-dir", data_dir, "data directory")->capture_default_str();
    app.add_option("--fixtures", fixture_dir, "fixture directory relative to the data directory")->capture_default_str();
    app.add_option("--output", output, "output file (default <fixtures>/oracle.jsonl)");
    app.add_flag("--check", check, "compare with the existing file instead of writing it");
    CLI11_PARSE(app, argc, argv);

    try {
        const std::filesystem::path data(data_dir);
        const auto dir = data / fixture_dir;
        const std::filesystem::path out_path = output.empty() ? dir / "oracle.jsonl" : std::filesystem::path(output);

        SessionConfig cfg;
        cfg.graph = std::make_shared<const TransitionGraph>(load_graph_file(data / "graph/default.json"));
        cfg.exemplars = std::make_shared<const ExemplarStore>(load_exemplars_file(data / "exemplars/default.jsonl"));
        cfg.templates = std::make_shared<const TemplateSet>(load_templates(data / "templates/manifest.json"));
        auto mock = std::make_shared<MockToolBackend>(load_tool_fixtures_file(dir / "tools.jsonl"));
        ToolRegistry::Builder builder;
        for (auto spec : load_tool_specs(data / "tools/tools.json")) {
            auto backend = spec.backend == BackendKind::Builtin ? nullptr : mock;
            builder.add(std::move(spec), backend);
        }
        cfg.registry = std::make_shared<const ToolRegistry>(builder.build());
        cfg.clock = step_clock();

        auto script = load_script(dir / "script.jsonl");
        std::vector<OracleFixture> fixtures;
        std::set<std::string> seen;
        auto records = load_dataset(dir / "questions.jsonl");
        for (auto& [key, queue] : script) {
            const auto& [qid, run_name] = key;
            auto rec = std::find_if(records.begin(), records.end(), [&](auto& r) { return r.id == qid; });
            if (rec == records.end()) throw SchemaError("script names unknown question '" + qid + "'");
            cfg.oracle = std::make_shared<FunctionOracle>([&, qid = qid](const OracleRequest& req) {
                if (queue.empty()) throw FixtureMiss(qid + ": script exhausted at a " + std::string(to_string(req.tag)) + " prompt");
                auto line = queue.front();
                queue.pop_front();
                if (line.tag != req.tag)
                    throw FixtureMiss(fmt::format("{}: script expects a {} prompt, engine asked {}", qid,
                                                  to_string(line.tag), to_string(req.tag)));
                auto f = make_oracle_fixture(req.tag, req.prompt, line.response);
                if (seen.insert(f.prompt_hash).second) fixtures.push_back(std::move(f));
                return line.response;
            });
            RunResult result;
            if (run_name == "agent") {
                result = run(cfg, rec->to_question());
            } else if (run_name.rfind("baseline:", 0) == 0) {
                std::vector<ActionId> pipeline;
                std::istringstream in(run_name.substr(9));
                for (std::string t; std::getline(in, t, ',');) pipeline.push_back(text::trim(t));
                result = run_sequential_baseline(pipeline, cfg, rec->to_question());
            } else {
                throw SchemaError("unknown script run '" + run_name + "'");
            }
            if (result.status == RunStatus::Error) throw Error(qid + ": " + result.error);
            if (!queue.empty()) throw FixtureMiss(fmt::format("{}: {} script lines unused", qid, queue.size()));
            fmt::print("{} [{}]: {} -> {}\n", qid, run_name, to_string(result.status), result.answer.value_or("-"));
        }
        auto doc = serialize_oracle_fixtures(fixtures);
        if (check) {
            auto current = std::filesystem::exists(out_path) ? text::read_file(out_path) : std::string{};
            if (current != doc) {
                fmt::print(stderr, "fixture drift: {} is stale; rerun make_fixtures\n", out_path.string());
                return 1;
            }
            fmt::print("{} is up to date ({} fixtures)\n", out_path.string(), fixtures.size());
            return 0;
        }
        text::write_file(out_path, doc);
        fmt::print("wrote {} fixtures to {}\n", fixtures.size(), out_path.string());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}: {}\n", error_kind(e), e.what());
        return 1;
    }
    return 0;
}
