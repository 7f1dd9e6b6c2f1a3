// SPDX-License-Identifier: Apache-2.0
#include "scenario.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>

namespace vista::testing {

std::filesystem::path data_dir() { return VISTA_DATA_DIR; }
std::filesystem::path motorcycle_dir() { return data_dir() / "fixtures" / "motorcycle"; }

Workspace motorcycle_workspace() {
    WorkspaceOptions o;
    o.data_dir = data_dir();
    return open_workspace(o);
}

VisualQuestion motorcycle_question() {
    return VisualQuestion{"motorcycle", "images/harley.png", "In what year was this motorcycle built?", {"1942"}};
}

TempDir::TempDir(std::string_view tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("{}-{}-{}", tag, ::getpid(), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

namespace {

std::vector<std::string> offered_tools(const std::string& prompt) {
    std::vector<std::string> out;
    std::istringstream in(prompt);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("  --", 0) != 0) continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        auto name = line.substr(4, colon - 4);
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    return out;
}

bool ends_with_marker(const std::string& prompt, std::string_view marker) {
    auto t = text::trim(prompt);
    return t.size() >= marker.size() && t.compare(t.size() - marker.size(), marker.size(), marker) == 0;
}

const std::vector<std::string>& all_tool_names() {
    static const std::vector<std::string> names = {"caption", "vqa", "object_detection", "object_select",
                                                   "image_search", "identical_image_search", "ocr",
                                                   "web_search", "llm_qa", "answer", "teleport"};
    return names;
}

const std::set<std::string>& query_tools() {
    static const std::set<std::string> q = {"vqa", "web_search", "llm_qa"};
    return q;
}

struct Shared {
    std::shared_ptr<const TransitionGraph> graph;
    std::shared_ptr<const ExemplarStore> exemplars;
    std::shared_ptr<const TemplateSet> templates;
    std::vector<ToolSpec> specs;
};

const Shared& shared() {
    static const Shared s = [] {
        Shared out;
        out.graph = std::make_shared<const TransitionGraph>(load_graph_file(data_dir() / "graph/default.json"));
        out.exemplars = std::make_shared<const ExemplarStore>(load_exemplars_file(data_dir() / "exemplars/default.jsonl"));
        out.templates = std::make_shared<const TemplateSet>(load_templates(data_dir() / "templates/manifest.json"));
        out.specs = load_tool_specs(data_dir() / "tools/tools.json");
        return out;
    }();
    return s;
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53); }

} // namespace

std::shared_ptr<OracleBackend> random_oracle(std::uint64_t seed, RandomKnobs knobs) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    auto mu = std::make_shared<std::mutex>();
    return std::make_shared<FunctionOracle>([rng, mu, knobs](const OracleRequest& req) -> std::string {
        std::lock_guard lock(*mu);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        auto pick = [&](const std::vector<std::string>& from) {
            return from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(*rng)];
        };
        switch (req.tag) {
        case OracleTag::Decomposition:
            if (u(*rng) < knobs.bad_decomposition) return "I am not sure how to split this.";
            if (u(*rng) < 0.2) return "Visual: what is shown here?\nKnowledge: #";
            return "Visual: which object is shown?\nKnowledge: In what year was # made?";
        case OracleTag::Planner: {
            if (ends_with_marker(req.prompt, "Query:")) return "Query: what is this object called?";
            const bool retry = req.prompt.find("Your previous reply could not be used") != std::string::npos;
            auto offered = offered_tools(req.prompt);
            if (offered.empty()) return "Action: caption";
            const double r = u(*rng);
            if (retry ? r < knobs.garbage_retry : r < knobs.off_graph) {
                std::vector<std::string> off;
                for (const auto& n : all_tool_names())
                    if (std::find(offered.begin(), offered.end(), n) == offered.end()) off.push_back(n);
                if (off.empty() || u(*rng) < 0.3) return "I would rather not choose.";
                return "Action: " + pick(off);
            }
            auto tool = pick(offered);
            if (query_tools().contains(tool) && u(*rng) >= knobs.omit_query)
                return fmt::format("Action: {}\nQuery: what is known about this {}?", tool, tool);
            return "Action: " + tool;
        }
        case OracleTag::ObjectSelect: {
            auto tail = req.prompt.substr(req.prompt.rfind("\nQuery: ") == std::string::npos ? 0 : req.prompt.rfind("\nQuery: "));
            std::size_t count = 0;
            for (std::size_t at = tail.find("Object #"); at != std::string::npos; at = tail.find("Object #", at + 1)) ++count;
            auto k = std::uniform_int_distribution<std::size_t>(0, count + 1)(*rng);
            return fmt::format("Looking at the list, the predicted Object #ID is {}", k);
        }
        case OracleTag::Reasoner: {
            const double r = u(*rng);
            if (r < knobs.uninformative) return u(*rng) < 0.5 ? "This output is not informative." : "";
            if (r < knobs.uninformative + knobs.final_answer)
                return fmt::format("Therefore, the predicted answer is item {}.", (*rng)() % 7);
            return fmt::format("The output mentions clue {} which may help.", (*rng)() % 97);
        }
        case OracleTag::LlmQa:
            return fmt::format("answer {}", (*rng)() % 5);
        }
        return {};
    });
}

std::shared_ptr<const ToolRegistry> random_registry(std::uint64_t seed, RandomKnobs knobs) {
    auto backend = std::make_shared<FunctionToolBackend>([seed, knobs](const ToolRequest& req) -> ToolOutput {
        const auto h = text::fnv1a64(fmt::format("{}\x1f{}\x1f{}\x1f{}", seed, req.tool, req.query, req.image_ref));
        if (unit(h) < knobs.tool_failure) throw ToolUnavailable(req.tool + " is down");
        const auto n = h % 1000;
        const auto& t = req.tool;
        if (t == "caption") return {t, Caption{fmt::format("a photo of thing {}", n)}};
        if (t == "vqa") return {t, VqaAnswer{fmt::format("thing {}", n)}};
        if (t == "llm_qa") return {t, LlmAnswer{fmt::format("fact {}", n)}};
        if (t == "ocr") return {t, OcrText{{ScoredText{fmt::format("LABEL {}", n), 0.5}}}};
        if (t == "object_detection") {
            Objects objs;
            for (std::size_t k = 0; k < 1 + h % 3; ++k)
                objs.objects.push_back(DetectedObject{{0, 0, 10.0 * (k + 1), 10.0 * (k + 1)},
                                                      fmt::format("{}#box{}", req.image_ref, k),
                                                      fmt::format("object {}", k), std::nullopt});
            return {t, objs};
        }
        if (t == "image_search" || t == "identical_image_search") {
            ImageSearchResult r;
            r.entities.push_back(Entity{fmt::format("Entity {}", n), "thing", "something seen before", 0.5});
            r.similar_captions.push_back(fmt::format("a similar picture {}", n));
            return {t, r};
        }
        if (t == "web_search")
            return {t, WebSearchResult({Snippet{"Result", fmt::format("fact number {}", n)}}, std::nullopt, {})};
        throw ToolUnavailable("no synthetic payload for " + t);
    });
    ToolRegistry::Builder b;
    for (auto spec : shared().specs) b.add(spec, spec.backend == BackendKind::Builtin ? nullptr : backend);
    return std::make_shared<const ToolRegistry>(b.build());
}

SessionConfig random_config(std::uint64_t seed, Mode mode, RandomKnobs knobs) {
    const auto& s = shared();
    SessionConfig c;
    c.graph = s.graph;
    c.exemplars = s.exemplars;
    c.templates = s.templates;
    c.registry = random_registry(seed, knobs);
    c.oracle = random_oracle(seed, knobs);
    c.cache = std::make_shared<ToolCache>();
    c.clock = step_clock();
    c.mode = mode;
    return c;
}

VisualQuestion random_question(std::uint64_t seed) {
    static const std::vector<std::string> questions = {
        "What is the name of this building?", "Which company made this aircraft?",
        "What does this animal eat?", "When was this bridge opened?", "What brand is written on the bottle?",
    };
    return VisualQuestion{fmt::format("r{}", seed), fmt::format("images/rand-{}.png", seed % 17),
                          questions[seed % questions.size()], {"item 1"}};
}

std::vector<std::string> graph_violations(const RunTrace& trace, const TransitionGraph& graph,
                                          const ToolRegistry& registry) {
    std::vector<std::string> out;
    std::string state = "START";
    std::map<std::string, std::set<std::string>> taken;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::StateChange) {
            state = e.payload.at("to").get<std::string>();
        } else if (e.kind == EventKind::PlannerDecision) {
            const auto recorded_state = e.payload.at("state").get<std::string>();
            const auto tool = e.payload.at("tool").get<std::string>();
            if (recorded_state != state)
                out.push_back(fmt::format("seq {}: decision recorded at {} but tracked state is {}", e.seq, recorded_state, state));
            std::vector<std::string> allowed;
            if (graph.has_state(state))
                for (const auto& a : graph.edges(state))
                    if (!taken[state].contains(a) && (a == "answer" || registry.contains(a))) allowed.push_back(a);
            if (std::find(allowed.begin(), allowed.end(), tool) == allowed.end())
                out.push_back(fmt::format("seq {}: {} chosen at {} outside [{}]", e.seq, tool, state, text::join(allowed, ",")));
            if (e.payload.at("feasible").get<std::vector<std::string>>() != allowed)
                out.push_back(fmt::format("seq {}: recorded feasible set differs at {}", e.seq, state));
            taken[state].insert(tool);
        }
    }
    return out;
}

std::vector<std::string> backtrack_violations(const RunTrace& trace) {
    std::vector<std::string> out;
    std::set<std::pair<std::string, std::string>> banned;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::Backtrack) {
            banned.emplace(e.payload.at("state").get<std::string>(), e.payload.at("tool").get<std::string>());
        } else if (e.kind == EventKind::PlannerDecision) {
            auto key = std::make_pair(e.payload.at("state").get<std::string>(), e.payload.at("tool").get<std::string>());
            if (banned.contains(key))
                out.push_back(fmt::format("seq {}: {} retried at {} after backtracking", e.seq, key.second, key.first));
        }
    }
    return out;
}

std::size_t count_events(const RunTrace& trace, EventKind kind) {
    return static_cast<std::size_t>(
        std::count_if(trace.events.begin(), trace.events.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
}

} // namespace vista::testing
