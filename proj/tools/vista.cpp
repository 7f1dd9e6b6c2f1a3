// SPDX-License-Identifier: Apache-2.0
// Operator entry point: run, eval, serve, induce-graph, stats, replay.
#include "vista/error.hpp"
#include "vista/eval.hpp"
#include "vista/replay.hpp"
#include "vista/service.hpp"
#include "vista/text.hpp"
#include "vista/workspace.hpp"

#include <csignal>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"

namespace {

using namespace vista;

struct Globals {
    std::string config;
    std::string data_dir;
    std::string oracle = "scripted";
    std::string oracle_fixtures;
    std::string oracle_endpoint;
    std::string oracle_token_env;
    bool relaxed = false;
    std::string tools = "mock";
    std::string tool_fixtures;
    std::string tool_endpoint;
    std::string tool_token_env;
    std::string out = "out";
};

WorkspaceOptions workspace_options(const Globals& g) {
    WorkspaceOptions o;
    if (!g.data_dir.empty()) o.data_dir = g.data_dir;
    if (g.oracle == "remote") o.oracle = OracleKind::Remote;
    if (!g.oracle_fixtures.empty()) o.oracle_fixtures = std::filesystem::absolute(g.oracle_fixtures);
    o.remote.endpoint = g.oracle_endpoint;
    o.remote.token_env = g.oracle_token_env;
    if (g.relaxed) o.fixture_match = FixtureMatch::Relaxed;
    if (g.tools == "live") o.tools = ToolsKind::Live;
    if (!g.tool_fixtures.empty()) o.tool_fixtures = std::filesystem::absolute(g.tool_fixtures);
    o.http.endpoint = g.tool_endpoint;
    o.http.token_env = g.tool_token_env;
    o.output_dir = g.out;
    if (!g.config.empty()) o = load_workspace_options(g.config, std::move(o));
    return o;
}

std::vector<ActionId> tool_list(const std::string& csv) {
    std::vector<ActionId> out;
    std::istringstream in(csv);
    for (std::string part; std::getline(in, part, ',');)
        if (auto t = text::trim(part); !t.empty()) out.push_back(t);
    return out;
}

/// Trace files from directories (a store, or loose *.jsonl files) and file paths.
std::vector<RunTrace> load_traces(const std::vector<std::string>& inputs) {
    std::vector<RunTrace> out;
    for (const auto& in : inputs) {
        std::filesystem::path p(in);
        if (std::filesystem::is_directory(p)) {
            if (std::filesystem::exists(p / "manifest.jsonl")) {
                for (auto& t : TraceStore(p).load_all()) out.push_back(std::move(t));
                continue;
            }
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(p))
                if (e.path().extension() == ".jsonl") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) out.push_back(load_trace_file(f));
        } else if (std::filesystem::is_regular_file(p)) {
            out.push_back(load_trace_file(p));
        } else {
            throw PreconditionError("trace input not found: " + in);
        }
    }
    return out;
}

std::vector<RunTrace> filter_mode(std::vector<RunTrace> traces, const std::string& mode) {
    if (mode.empty()) return traces;
    auto m = parse_trace_mode(mode);
    if (!m) throw PreconditionError("unknown trace mode '" + mode + "'");
    std::erase_if(traces, [&](const RunTrace& t) { return t.mode != *m; });
    return traces;
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const ReplayDivergence*>(&e)) return 4;
    if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return 3;
    if (dynamic_cast<const PreconditionError*>(&e) || dynamic_cast<const UnknownTool*>(&e)) return 2;
    return 1;
}

Service* g_service = nullptr;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-constrained visual question answering agent"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "vista.config/v1 file; its values override flags")->check(CLI::ExistingFile);
    app.add_option("--data-dir", g.data_dir, "data directory (graph, exemplars, templates, fixtures)");
    app.add_option("--oracle", g.oracle, "language model backend")->check(CLI::IsMember({"scripted", "remote"}));
    app.add_option("--oracle-fixtures", g.oracle_fixtures, "recorded oracle replies for the scripted backend");
    app.add_flag("--relaxed-fixtures", g.relaxed, "match oracle fixtures by prompt excerpt on a hash miss");
    app.add_option("--oracle-endpoint", g.oracle_endpoint, "base URL of the remote oracle");
    app.add_option("--oracle-token-env", g.oracle_token_env, "environment variable holding the oracle token");
    app.add_option("--tools", g.tools, "tool backends")->check(CLI::IsMember({"mock", "live"}));
    app.add_option("--tool-fixtures", g.tool_fixtures, "recorded tool outputs for the mock backends");
    app.add_option("--tool-endpoint", g.tool_endpoint, "base URL of the live tool service");
    app.add_option("--tool-token-env", g.tool_token_env, "environment variable holding the tool token");
    app.add_option("--out", g.out, "output directory")->capture_default_str();

    // run
    auto* run_cmd = app.add_subcommand("run", "answer one question");
    std::string question, image, qid, dataset_path, mode_name, baseline;
    std::size_t max_steps = 0;
    bool no_guard = false, deterministic = false;
    run_cmd->add_option("--question", question, "question text");
    run_cmd->add_option("--image", image, "image reference");
    run_cmd->add_option("--id", qid, "question id (selects a record with --dataset)");
    run_cmd->add_option("--dataset", dataset_path, "dataset file to take the question from")->check(CLI::ExistingFile);
    run_cmd->add_option("--mode", mode_name, "constrained or unconstrained")
        ->check(CLI::IsMember({"constrained", "unconstrained"}));
    run_cmd->add_option("--max-steps", max_steps, "planner call limit");
    run_cmd->add_flag("--no-step-guard", no_guard, "rely on traversed-action exclusion alone");
    run_cmd->add_option("--baseline", baseline, "comma-separated tool pipeline instead of the planner");
    run_cmd->add_flag("--deterministic", deterministic, "fixed timestamps");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a dataset");
    std::string eval_dataset, pipeline, ablation, label;
    std::size_t workers = 1;
    bool numeric_range = false;
    eval_cmd->add_option("--dataset", eval_dataset, "JSONL or TSV dataset")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--pipeline", pipeline, "comma-separated baseline pipeline");
    eval_cmd->add_option("--ablate", ablation, "comma-separated tools to remove");
    eval_cmd->add_option("--label", label, "report label");
    eval_cmd->add_option("--workers", workers, "concurrent sessions")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--mode", mode_name, "constrained or unconstrained")
        ->check(CLI::IsMember({"constrained", "unconstrained"}));
    eval_cmd->add_flag("--numeric-range", numeric_range, "accept numbers inside 'lo - hi' gold ranges");
    eval_cmd->add_flag("--deterministic", deterministic, "fixed timestamps");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "start the HTTP service");
    std::string host = "127.0.0.1", images, playlist, trace_dir, collection = "unconstrained", cors = "*";
    std::vector<std::string> profiles;
    int port = 8080;
    serve_cmd->add_option("--host", host, "bind address")->capture_default_str();
    serve_cmd->add_option("--port", port, "port (0 picks a free one)")->capture_default_str();
    serve_cmd->add_option("--images", images, "directory served under /images");
    serve_cmd->add_option("--playlist", playlist, "dataset offered to study participants")->check(CLI::ExistingFile);
    serve_cmd->add_option("--trace-dir", trace_dir, "trace store (default <out>/traces)");
    serve_cmd->add_option("--collection", collection, "human collection mode")->capture_default_str()
        ->check(CLI::IsMember({"constrained", "unconstrained"}));
    serve_cmd->add_option("--profile", profiles, "extra config_ref as name=config.json");
    serve_cmd->add_option("--cors-origin", cors, "allowed UI origin")->capture_default_str();

    // induce-graph
    auto* induce_cmd = app.add_subcommand("induce-graph", "build a transition graph from traces");
    std::vector<std::string> trace_inputs;
    std::string graph_out, trace_mode;
    std::size_t min_count = 1;
    induce_cmd->add_option("traces", trace_inputs, "trace files or directories")->required();
    induce_cmd->add_option("--output", graph_out, "graph file (default <out>/induced_graph.json)");
    induce_cmd->add_option("--min-count", min_count, "drop rarer edges")->capture_default_str();
    induce_cmd->add_option("--trace-mode", trace_mode, "only agent, human or baseline traces");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "analytics tables from traces");
    std::size_t positions = 3;
    stats_cmd->add_option("traces", trace_inputs, "trace files or directories")->required();
    stats_cmd->add_option("--positions", positions, "per-position frequency tables to write")->capture_default_str();
    stats_cmd->add_option("--trace-mode", trace_mode, "only agent, human or baseline traces");
    std::string tables_out;
    stats_cmd->add_option("--output", tables_out, "directory for the tables (default <out>)");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "re-run a trace and check for divergence");
    std::string replay_path;
    replay_cmd->add_option("trace", replay_path, "trace file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        const std::filesystem::path out_dir = g.out;
        auto opts = [&] { return workspace_options(g); };

        if (*run_cmd) {
            auto o = opts();
            if (!mode_name.empty()) o.mode = *parse_mode(mode_name);
            if (max_steps) o.max_steps = max_steps;
            if (no_guard) o.step_guard = false;
            VisualQuestion q;
            if (!dataset_path.empty()) {
                auto records = load_dataset(dataset_path);
                auto it = std::find_if(records.begin(), records.end(), [&](auto& r) { return qid.empty() || r.id == qid; });
                if (it == records.end()) throw PreconditionError("no record '" + qid + "' in " + dataset_path);
                q = it->to_question();
            } else {
                if (question.empty() || image.empty()) throw PreconditionError("run needs --question and --image, or --dataset");
                q = VisualQuestion{qid.empty() ? "q-" + text::hash_hex(question + "\x1f" + image) : qid, image, question, {}};
            }
            auto ws = open_workspace(o);
            auto cfg = ws.config();
            if (deterministic) cfg.clock = step_clock();
            auto result = baseline.empty() ? run(cfg, q) : run_sequential_baseline(tool_list(baseline), cfg, q);
            TraceStore store(o.output_dir / "traces");
            store.save(result.trace);
            if (!o.cache.empty()) ws.cache->save(o.resolve(o.cache));
            fmt::print("status: {}\n", to_string(result.status));
            fmt::print("answer: {}\n", result.answer.value_or(""));
            fmt::print("tools: {}\n", text::join(tool_calls(result.trace), " -> "));
            fmt::print("trace: {}\n", (store.dir() / (result.trace.session_id + ".jsonl")).string());
            if (result.status == RunStatus::Error) fmt::print(stderr, "error: {}\n", result.error);
            return result.status == RunStatus::Error ? 1 : 0;
        }

        if (*eval_cmd) {
            auto o = opts();
            if (!mode_name.empty()) o.mode = *parse_mode(mode_name);
            auto ws = open_workspace(o);
            auto cfg = ws.config();
            if (deterministic) cfg.clock = step_clock();
            auto records = load_dataset(eval_dataset);
            TraceStore store(o.output_dir / "traces");
            ExperimentSpec spec;
            spec.label = label;
            if (!pipeline.empty()) spec.pipeline = tool_list(pipeline);
            for (auto& t : tool_list(ablation)) spec.ablation.insert(t);
            spec.workers = workers;
            spec.accuracy.numeric_range = numeric_range;
            spec.store = &store;
            auto report = run_experiment(records, cfg, spec);
            auto report_path = o.output_dir / "report.json";
            text::write_file(report_path, serialize_report(report));
            fmt::print("{}: {:.2f}% over {} records\n", report.label, 100.0 * report.mean, report.rows.size());
            for (const auto& [status, n] : report.status_counts) fmt::print("  {}: {}\n", status, n);
            fmt::print("report: {}\n", report_path.string());
            return 0;
        }

        if (*serve_cmd) {
            ServiceOptions so;
            auto o = opts();
            so.profiles.emplace("default", open_workspace(o));
            for (const auto& p : profiles) {
                auto eq = p.find('=');
                if (eq == std::string::npos) throw PreconditionError("--profile expects name=config.json");
                so.profiles.emplace(p.substr(0, eq), open_workspace(load_workspace_options(p.substr(eq + 1), o)));
            }
            so.trace_dir = trace_dir.empty() ? o.output_dir / "traces" : std::filesystem::path(trace_dir);
            so.images_dir = images.empty() ? o.resolve("images") : std::filesystem::path(images);
            if (!playlist.empty())
                for (const auto& r : load_dataset(playlist)) so.playlist.push_back(r.to_question());
            so.human_collection = *parse_mode(collection);
            so.cors_origin = cors;
            Service service(std::move(so));
            int bound = port;
            if (port == 0)
                bound = service.bind_any_port(host);
            else if (!service.bind(host, port))
                throw PreconditionError(fmt::format("cannot bind {}:{}", host, port));
            if (bound < 0) throw PreconditionError("cannot bind " + host);
            g_service = &service;
            std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
            std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
            fmt::print("listening on http://{}:{}\n", host, bound);
            std::fflush(stdout);
            service.serve();
            g_service = nullptr;
            return 0;
        }

        if (*induce_cmd) {
            auto traces = filter_mode(load_traces(trace_inputs), trace_mode);
            auto induced = induce_graph(traces);
            if (induced.empty()) throw PreconditionError("no tool calls in the given traces");
            auto graph = to_transition_graph(induced, min_count);
            auto path = graph_out.empty() ? out_dir / "induced_graph.json" : std::filesystem::path(graph_out);
            text::write_file(path, serialize_graph(graph));
            text::write_file(path.parent_path() / (path.stem().string() + ".csv"), induced_graph_csv(induced));
            fmt::print("{} traces, {} states, {} edges\n", traces.size(), graph.states().size(), graph.edge_count());
            fmt::print("graph: {}\n", path.string());
            return 0;
        }

        if (*stats_cmd) {
            const auto dir = tables_out.empty() ? out_dir : std::filesystem::path(tables_out);
            std::filesystem::create_directories(dir);
            auto traces = filter_mode(load_traces(trace_inputs), trace_mode);
            text::write_file(dir / "induced_graph.csv", induced_graph_csv(induce_graph(traces)));
            text::write_file(dir / "tool_frequency.csv", tool_frequency_csv(tool_frequency(traces)));
            for (std::size_t k = 1; k <= positions; ++k)
                text::write_file(dir / fmt::format("tool_frequency_pos{}.csv", k), tool_frequency_csv(tool_frequency(traces, k)));
            auto lengths = length_distribution(traces);
            text::write_file(dir / "lengths.csv", length_distribution_csv(lengths));
            text::write_file(dir / "verdicts.csv", verdict_frequency_csv(verdict_frequency(traces)));
            fmt::print("{} traces\n", traces.size());
            for (const auto& [tool, n] : tool_frequency(traces)) fmt::print("  {}: {}\n", tool, n);
            fmt::print("tables: {}\n", dir.string());
            return 0;
        }

        if (*replay_cmd) {
            auto trace = load_trace_file(replay_path);
            auto ws = open_workspace(opts());
            auto result = replay(trace, ws.config());
            fmt::print("replay ok: {} events, status {}\n", result.trace.events.size(), to_string(result.status));
            return 0;
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}: {}\n", error_kind(e), e.what());
        return exit_code(e);
    }
    return 0;
}
