// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/engine.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace vista {

inline constexpr std::string_view kConfigSchema = "vista.config/v1";

enum class OracleKind { Scripted, Remote };
enum class ToolsKind { Mock, Live };

/// Where the shared inputs come from and which backends to use. Relative
/// paths resolve against data_dir.
struct WorkspaceOptions {
    std::filesystem::path data_dir;
    std::filesystem::path graph = "graph/default.json";
    std::filesystem::path exemplars = "exemplars/default.jsonl";
    std::filesystem::path templates = "templates/manifest.json";
    std::filesystem::path tool_specs = "tools/tools.json";

    OracleKind oracle = OracleKind::Scripted;
    std::filesystem::path oracle_fixtures = "fixtures/motorcycle/oracle.jsonl";
    FixtureMatch fixture_match = FixtureMatch::Strict;
    RemoteOracleConfig remote;

    ToolsKind tools = ToolsKind::Mock;
    std::filesystem::path tool_fixtures = "fixtures/motorcycle/tools.jsonl";
    HttpToolConfig http;
    std::filesystem::path cache; // empty: in-memory cache only

    Mode mode = Mode::Constrained;
    std::size_t max_steps = kDefaultMaxSteps;
    std::size_t exemplar_budget = kDefaultExemplarBudget;
    bool step_guard = true;

    std::filesystem::path output_dir = "out";

    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// The data directory shipped with the build.
std::filesystem::path default_data_dir();

/// Reads a vista.config/v1 document over `base`. Relative data_dir and
/// output_dir resolve against `origin` (the config file's directory).
WorkspaceOptions parse_workspace_options(const nlohmann::ordered_json& doc, WorkspaceOptions base = {},
                                         const std::filesystem::path& origin = {});
WorkspaceOptions load_workspace_options(const std::filesystem::path& path, WorkspaceOptions base = {});

/// Loaded inputs and backends, shareable across sessions.
struct Workspace {
    WorkspaceOptions options;
    std::shared_ptr<const TransitionGraph> graph;
    std::shared_ptr<const ExemplarStore> exemplars;
    std::shared_ptr<const TemplateSet> templates;
    std::shared_ptr<const ToolRegistry> registry;
    std::shared_ptr<OracleBackend> oracle;
    std::shared_ptr<ToolCache> cache;

    /// A fresh config over the shared inputs with the workspace defaults.
    SessionConfig config() const;
};

/// Checks every referenced file first; a missing one raises PreconditionError
/// naming it.
Workspace open_workspace(const WorkspaceOptions& options);

} // namespace vista
