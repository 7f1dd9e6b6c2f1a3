// SPDX-License-Identifier: Apache-2.0
#include "vista/workspace.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <fmt/format.h>

namespace vista {

using ojson = nlohmann::ordered_json;

namespace {

template <class T>
T field(const ojson& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const ojson::exception& e) {
        throw SchemaError(fmt::format("config field '{}': {}", key, e.what()));
    }
}

std::filesystem::path path_field(const ojson& doc, const char* key, const std::filesystem::path& fallback) {
    return field<std::string>(doc, key, fallback.string());
}

void require_file(const std::filesystem::path& p, std::string_view what) {
    if (!std::filesystem::is_regular_file(p))
        throw PreconditionError(fmt::format("{} file not found: {}", what, p.string()));
}

} // namespace

std::filesystem::path default_data_dir() { return VISTA_DATA_DIR; }

std::filesystem::path WorkspaceOptions::resolve(const std::filesystem::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return (data_dir.empty() ? default_data_dir() : data_dir) / p;
}

WorkspaceOptions parse_workspace_options(const ojson& doc, WorkspaceOptions base, const std::filesystem::path& origin) {
    if (!doc.is_object()) throw SchemaError("config must be an object");
    if (auto schema = field<std::string>(doc, "schema", std::string(kConfigSchema)); schema != kConfigSchema)
        throw SchemaError("unsupported config schema '" + schema + "'");
    auto anchored = [&](std::filesystem::path p) { return p.is_relative() && !origin.empty() ? origin / p : p; };

    if (doc.contains("data_dir")) base.data_dir = anchored(path_field(doc, "data_dir", {}));
    base.graph = path_field(doc, "graph", base.graph);
    base.exemplars = path_field(doc, "exemplars", base.exemplars);
    base.templates = path_field(doc, "templates", base.templates);
    base.tool_specs = path_field(doc, "tool_specs", base.tool_specs);
    if (doc.contains("output_dir")) base.output_dir = anchored(path_field(doc, "output_dir", {}));
    base.cache = path_field(doc, "cache", base.cache);

    if (doc.contains("oracle")) {
        const auto& o = doc.at("oracle");
        auto kind = field<std::string>(o, "kind", "scripted");
        if (kind == "scripted")
            base.oracle = OracleKind::Scripted;
        else if (kind == "remote")
            base.oracle = OracleKind::Remote;
        else
            throw SchemaError("unknown oracle kind '" + kind + "'");
        base.oracle_fixtures = path_field(o, "fixtures", base.oracle_fixtures);
        auto match = field<std::string>(o, "match", base.fixture_match == FixtureMatch::Strict ? "strict" : "relaxed");
        if (match != "strict" && match != "relaxed") throw SchemaError("unknown fixture match '" + match + "'");
        base.fixture_match = match == "strict" ? FixtureMatch::Strict : FixtureMatch::Relaxed;
        base.remote.endpoint = field<std::string>(o, "endpoint", base.remote.endpoint);
        base.remote.path = field<std::string>(o, "path", base.remote.path);
        base.remote.token_env = field<std::string>(o, "token_env", base.remote.token_env);
        base.remote.timeout = std::chrono::milliseconds(field<long>(o, "timeout_ms", base.remote.timeout.count()));
        base.remote.retries = field<int>(o, "retries", base.remote.retries);
        base.remote.backoff = std::chrono::milliseconds(field<long>(o, "backoff_ms", base.remote.backoff.count()));
    }
    if (doc.contains("tools")) {
        const auto& t = doc.at("tools");
        auto kind = field<std::string>(t, "kind", "mock");
        if (kind == "mock")
            base.tools = ToolsKind::Mock;
        else if (kind == "live")
            base.tools = ToolsKind::Live;
        else
            throw SchemaError("unknown tools kind '" + kind + "'");
        base.tool_fixtures = path_field(t, "fixtures", base.tool_fixtures);
        base.http.endpoint = field<std::string>(t, "endpoint", base.http.endpoint);
        base.http.token_env = field<std::string>(t, "token_env", base.http.token_env);
        base.http.timeout = std::chrono::milliseconds(field<long>(t, "timeout_ms", base.http.timeout.count()));
    }
    if (doc.contains("mode")) {
        auto name = field<std::string>(doc, "mode", "");
        auto mode = parse_mode(name);
        if (!mode) throw SchemaError("unknown mode '" + name + "'");
        base.mode = *mode;
    }
    base.max_steps = field<std::size_t>(doc, "max_steps", base.max_steps);
    base.exemplar_budget = field<std::size_t>(doc, "exemplar_budget", base.exemplar_budget);
    base.step_guard = field<bool>(doc, "step_guard", base.step_guard);
    return base;
}

WorkspaceOptions load_workspace_options(const std::filesystem::path& path, WorkspaceOptions base) {
    require_file(path, "config");
    ojson doc;
    try {
        doc = ojson::parse(text::read_file(path));
    } catch (const ojson::parse_error& e) {
        throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return parse_workspace_options(doc, std::move(base), path.parent_path());
}

SessionConfig Workspace::config() const {
    SessionConfig c;
    c.graph = graph;
    c.mode = options.mode;
    c.exemplar_budget = options.exemplar_budget;
    c.max_steps = options.max_steps;
    c.step_guard = options.step_guard;
    c.oracle = oracle;
    c.registry = registry;
    c.exemplars = exemplars;
    c.templates = templates;
    c.cache = cache;
    return c;
}

Workspace open_workspace(const WorkspaceOptions& options) {
    Workspace ws;
    ws.options = options;
    const auto graph = options.resolve(options.graph);
    const auto exemplars = options.resolve(options.exemplars);
    const auto templates = options.resolve(options.templates);
    const auto specs_path = options.resolve(options.tool_specs);
    require_file(graph, "graph");
    require_file(exemplars, "exemplars");
    require_file(templates, "templates manifest");
    require_file(specs_path, "tool manifest");
    if (options.oracle == OracleKind::Scripted) require_file(options.resolve(options.oracle_fixtures), "oracle fixture");
    if (options.tools == ToolsKind::Mock) require_file(options.resolve(options.tool_fixtures), "tool fixture");
    if (options.oracle == OracleKind::Remote && options.remote.endpoint.empty())
        throw PreconditionError("remote oracle needs an endpoint");
    if (options.tools == ToolsKind::Live && options.http.endpoint.empty())
        throw PreconditionError("live tools need an endpoint");

    ws.graph = std::make_shared<const TransitionGraph>(load_graph_file(graph));
    ws.exemplars = std::make_shared<const ExemplarStore>(load_exemplars_file(exemplars));
    ws.templates = std::make_shared<const TemplateSet>(load_templates(templates));

    if (options.oracle == OracleKind::Scripted)
        ws.oracle = std::make_shared<ScriptedOracle>(
            load_oracle_fixtures_file(options.resolve(options.oracle_fixtures).string()), options.fixture_match);
    else
        ws.oracle = std::make_shared<RemoteOracle>(options.remote);

    auto cache_path = options.resolve(options.cache);
    ws.cache = !cache_path.empty() && std::filesystem::exists(cache_path) ? ToolCache::load(cache_path)
                                                                          : std::make_shared<ToolCache>();

    std::shared_ptr<ToolBackend> mock;
    auto mock_backend = [&] {
        if (!mock) {
            auto p = options.resolve(options.tool_fixtures);
            require_file(p, "tool fixture");
            mock = std::make_shared<MockToolBackend>(load_tool_fixtures_file(p));
        }
        return mock;
    };
    std::shared_ptr<ToolBackend> http;
    ToolRegistry::Builder builder;
    for (auto spec : load_tool_specs(specs_path)) {
        std::shared_ptr<ToolBackend> backend;
        if (spec.backend == BackendKind::Mock || (spec.backend == BackendKind::Live && options.tools == ToolsKind::Mock)) {
            backend = mock_backend();
        } else if (spec.backend == BackendKind::Live) {
            if (spec.name == "llm_qa") {
                backend = std::make_shared<OracleQaBackend>(ws.oracle);
            } else {
                if (!http) http = std::make_shared<HttpToolBackend>(options.http);
                backend = http;
            }
        }
        builder.add(std::move(spec), std::move(backend));
    }
    ws.registry = std::make_shared<const ToolRegistry>(builder.build());
    return ws;
}

} // namespace vista
