// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/graph.hpp"
#include "vista/oracle.hpp"
#include "vista/prompting.hpp"

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace vista {

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

struct DetectedObject {
    std::array<double, 4> box{}; // x0, y0, x1, y1
    std::string crop_ref;
    std::string label;
    std::optional<double> score;

    bool operator==(const DetectedObject&) const = default;
};

struct Entity {
    std::string name;
    std::string kind;
    std::string description;
    double score = 0.0;

    bool operator==(const Entity&) const = default;
};

struct ScoredText {
    std::string text;
    double score = 0.0;

    bool operator==(const ScoredText&) const = default;
};

struct Snippet {
    std::string title;
    std::string content;

    bool operator==(const Snippet&) const = default;
};

struct Caption {
    std::string text;
    bool operator==(const Caption&) const = default;
};

struct VqaAnswer {
    std::string text;
    bool operator==(const VqaAnswer&) const = default;
};

struct Objects {
    std::vector<DetectedObject> objects;
    bool operator==(const Objects&) const = default;
};

struct ImageSearchResult {
    std::vector<Entity> entities;
    std::vector<std::string> product_titles;
    std::vector<std::string> similar_captions;
    std::vector<std::string> identical_captions;

    bool operator==(const ImageSearchResult&) const = default;
};

struct OcrText {
    std::vector<ScoredText> lines;
    bool operator==(const OcrText&) const = default;
};

inline constexpr std::size_t kMaxRelatedQuestions = 5;

/// Web search reply. At most five related questions survive construction.
class WebSearchResult {
public:
    WebSearchResult() = default;
    WebSearchResult(std::vector<Snippet> snippets, std::optional<std::string> knowledge_panel,
                    std::vector<std::string> related_questions);

    const std::vector<Snippet>& snippets() const noexcept { return snippets_; }
    const std::optional<std::string>& knowledge_panel() const noexcept { return knowledge_panel_; }
    const std::vector<std::string>& related_questions() const noexcept { return related_questions_; }

    bool operator==(const WebSearchResult&) const = default;

private:
    std::vector<Snippet> snippets_;
    std::optional<std::string> knowledge_panel_;
    std::vector<std::string> related_questions_;
};

struct LlmAnswer {
    std::string text;
    bool operator==(const LlmAnswer&) const = default;
};

using ToolPayload = std::variant<Caption, VqaAnswer, Objects, ImageSearchResult, OcrText,
                                 WebSearchResult, LlmAnswer>;

struct ToolOutput {
    ActionId tool;
    ToolPayload payload;

    bool operator==(const ToolOutput&) const = default;
};

/// Wire name of the payload alternative, e.g. "objects" or "web_search".
std::string_view payload_kind(const ToolPayload& payload);

/// Web search and LLM answers go to the knowledge reasoner; everything else
/// (objects, image search lists, captions, OCR) to the visual one.
bool is_knowledge_payload(const ToolPayload& payload);

nlohmann::ordered_json tool_output_to_json(const ToolOutput& output);
/// Throws SchemaError.
ToolOutput tool_output_from_json(const nlohmann::ordered_json& doc);

/// Bracketed list, one line per item, "(score=x)" where a score exists.
/// An output with no items renders as "[]".
std::string render_tool_output(const ToolOutput& output);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

struct ToolRequest {
    ActionId tool;
    std::string query;
    std::string image_ref;
};

class ToolBackend {
public:
    virtual ~ToolBackend() = default;
    /// Throws ToolUnavailable when the backend cannot serve the request.
    virtual ToolOutput invoke(const ToolRequest& request) = 0;
};

/// Whitespace-collapsed, lower-cased query used in cache and fixture keys.
std::string canonical_query(std::string_view query);

struct ToolFixture {
    ActionId tool;
    std::string query;
    std::string image_ref;
    ToolOutput output;

    bool operator==(const ToolFixture&) const = default;
};

/// Line-delimited {tool, query, image_ref, payload} records.
std::vector<ToolFixture> load_tool_fixtures(std::string_view document);
std::vector<ToolFixture> load_tool_fixtures_file(const std::filesystem::path& path);
std::string serialize_tool_fixtures(const std::vector<ToolFixture>& fixtures);

/// Deterministic offline backend resolving (tool, query, image_ref) from fixtures.
class MockToolBackend final : public ToolBackend {
public:
    explicit MockToolBackend(std::vector<ToolFixture> fixtures);

    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::map<std::string, ToolOutput> by_key_;
};

class FunctionToolBackend final : public ToolBackend {
public:
    using Fn = std::function<ToolOutput(const ToolRequest&)>;
    explicit FunctionToolBackend(Fn fn) : fn_(std::move(fn)) {}

    ToolOutput invoke(const ToolRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

/// Short-answer QA through a language model; used for `llm_qa`.
class OracleQaBackend final : public ToolBackend {
public:
    explicit OracleQaBackend(std::shared_ptr<OracleBackend> oracle) : oracle_(std::move(oracle)) {}

    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<OracleBackend> oracle_;
};

struct HttpToolConfig {
    std::string endpoint;                 // base URL; requests go to {endpoint}/v1/tools/{name}
    std::string token_env;
    std::chrono::milliseconds timeout{30000};
};

inline constexpr std::string_view kToolWireSchema = "vista.tool/v1";

/// Live adapter: one POST {schema, tool, query, image_ref} per call; the reply
/// is the payload document.
class HttpToolBackend final : public ToolBackend {
public:
    explicit HttpToolBackend(HttpToolConfig config);

    ToolOutput invoke(const ToolRequest& request) override;

private:
    HttpToolConfig config_;
};

/// Read-through cache keyed by (tool, canonical query, image ref). Safe for
/// concurrent use; identical keys race benignly (last write wins).
class ToolCache {
public:
    std::optional<ToolOutput> lookup(const ToolRequest& request) const;
    void store(const ToolRequest& request, const ToolOutput& output);
    std::size_t size() const;

    std::vector<ToolFixture> entries() const;
    /// Persists in the tool fixture format.
    void save(const std::filesystem::path& path) const;
    static std::shared_ptr<ToolCache> load(const std::filesystem::path& path);

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, ToolFixture> entries_;
};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

enum class BackendKind { Live, Mock, Builtin };

std::string_view to_string(BackendKind kind);

struct ToolSpec {
    ActionId name;
    bool needs_query = false;
    bool needs_image = true;
    std::string description; // planner-facing instruction line
    BackendKind backend = BackendKind::Mock;

    bool operator==(const ToolSpec&) const = default;
};

/// Reads {"schema", "tools": [...]} from the tool manifest.
std::vector<ToolSpec> load_tool_specs(const std::filesystem::path& path);
std::filesystem::path default_tool_specs_path();

/// Name -> spec + backend. Immutable once built.
class ToolRegistry {
public:
    class Builder {
    public:
        /// Builtin tools take no backend; all others require one.
        Builder& add(ToolSpec spec, std::shared_ptr<ToolBackend> backend = nullptr);
        ToolRegistry build();

    private:
        std::vector<ToolSpec> specs_;
        std::map<ActionId, std::shared_ptr<ToolBackend>> backends_;
    };

    bool contains(std::string_view name) const;
    /// Throws UnknownTool.
    const ToolSpec& spec(std::string_view name) const;
    std::shared_ptr<ToolBackend> backend(std::string_view name) const;

    /// Registration order.
    const std::vector<ActionId>& names() const noexcept { return names_; }
    std::size_t size() const noexcept { return names_.size(); }
    bool empty() const noexcept { return names_.empty(); }

    TaskInstructions instructions() const;

    ToolRegistry without(const std::set<ActionId>& excluded) const;

private:
    std::vector<ActionId> names_;
    std::map<ActionId, ToolSpec, std::less<>> specs_;
    std::map<ActionId, std::shared_ptr<ToolBackend>, std::less<>> backends_;
};

/// Runs one tool, through `cache` when given. Throws UnknownTool, BadQuery,
/// or ToolUnavailable.
ToolOutput execute_tool(const ToolRegistry& registry, const ActionId& tool, std::string_view query,
                        std::string_view image_ref, ToolCache* cache = nullptr);

} // namespace vista
