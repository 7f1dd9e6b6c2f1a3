// SPDX-License-Identifier: Apache-2.0
#include "vista/tools.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <fmt/format.h>

namespace vista {

using ojson = nlohmann::ordered_json;

WebSearchResult::WebSearchResult(std::vector<Snippet> snippets,
                                 std::optional<std::string> knowledge_panel,
                                 std::vector<std::string> related_questions)
    : snippets_(std::move(snippets)),
      knowledge_panel_(std::move(knowledge_panel)),
      related_questions_(std::move(related_questions)) {
    if (related_questions_.size() > kMaxRelatedQuestions) related_questions_.resize(kMaxRelatedQuestions);
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string item(std::string_view body, std::optional<double> score = std::nullopt) {
    auto line = "  " + text::collapse_whitespace(body);
    if (score) line += " (score=" + text::format_score(*score) + ")";
    return line + ",";
}

std::string bracket(const std::vector<std::string>& lines) {
    if (lines.empty()) return "[]";
    return "[\n" + text::join(lines, "\n") + "\n]";
}

std::string entity_line(const Entity& e) {
    std::string body = e.name;
    if (!e.kind.empty()) body += " (" + e.kind + ")";
    if (!e.description.empty()) body += ": " + e.description;
    return item(body, e.score);
}

// JSON helpers that turn type errors into SchemaError.
template <class T>
T get_field(const ojson& doc, const char* key) {
    if (!doc.contains(key)) throw SchemaError(std::string("tool payload lacks '") + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const ojson::exception& e) {
        throw SchemaError(std::string("tool payload field '") + key + "': " + e.what());
    }
}

template <class T>
T get_or(const ojson& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
    return get_field<T>(doc, key);
}

ojson payload_to_json(const ToolPayload& payload) {
    ojson doc;
    doc["kind"] = payload_kind(payload);
    std::visit(overloaded{
                   [&](const Caption& p) { doc["text"] = p.text; },
                   [&](const VqaAnswer& p) { doc["text"] = p.text; },
                   [&](const LlmAnswer& p) { doc["text"] = p.text; },
                   [&](const Objects& p) {
                       ojson list = ojson::array();
                       for (const auto& o : p.objects) {
                           ojson obj;
                           obj["box"] = o.box;
                           obj["crop_ref"] = o.crop_ref;
                           obj["label"] = o.label;
                           if (o.score) obj["score"] = *o.score;
                           list.push_back(std::move(obj));
                       }
                       doc["objects"] = std::move(list);
                   },
                   [&](const ImageSearchResult& p) {
                       ojson list = ojson::array();
                       for (const auto& e : p.entities) {
                           ojson obj;
                           obj["name"] = e.name;
                           obj["kind"] = e.kind;
                           obj["description"] = e.description;
                           obj["score"] = e.score;
                           list.push_back(std::move(obj));
                       }
                       doc["entities"] = std::move(list);
                       doc["product_titles"] = p.product_titles;
                       doc["similar_captions"] = p.similar_captions;
                       doc["identical_captions"] = p.identical_captions;
                   },
                   [&](const OcrText& p) {
                       ojson list = ojson::array();
                       for (const auto& l : p.lines) list.push_back(ojson{{"text", l.text}, {"score", l.score}});
                       doc["lines"] = std::move(list);
                   },
                   [&](const WebSearchResult& p) {
                       ojson list = ojson::array();
                       for (const auto& s : p.snippets())
                           list.push_back(ojson{{"title", s.title}, {"content", s.content}});
                       doc["snippets"] = std::move(list);
                       if (p.knowledge_panel())
                           doc["knowledge_panel"] = *p.knowledge_panel();
                       else
                           doc["knowledge_panel"] = nullptr;
                       doc["related_questions"] = p.related_questions();
                   },
               },
               payload);
    return doc;
}

ToolPayload payload_from_json(const ojson& doc) {
    if (!doc.is_object()) throw SchemaError("tool payload must be an object");
    auto kind = get_field<std::string>(doc, "kind");
    if (kind == "caption") return Caption{get_field<std::string>(doc, "text")};
    if (kind == "vqa_answer") return VqaAnswer{get_field<std::string>(doc, "text")};
    if (kind == "llm_answer") return LlmAnswer{get_field<std::string>(doc, "text")};
    if (kind == "objects") {
        Objects out;
        for (const auto& o : get_field<ojson>(doc, "objects")) {
            DetectedObject obj;
            obj.box = get_or<std::array<double, 4>>(o, "box", {});
            obj.crop_ref = get_field<std::string>(o, "crop_ref");
            obj.label = get_or<std::string>(o, "label", {});
            if (o.contains("score") && !o.at("score").is_null()) obj.score = get_field<double>(o, "score");
            out.objects.push_back(std::move(obj));
        }
        return out;
    }
    if (kind == "image_search") {
        ImageSearchResult out;
        for (const auto& e : get_or<ojson>(doc, "entities", ojson::array()))
            out.entities.push_back(Entity{get_field<std::string>(e, "name"),
                                          get_or<std::string>(e, "kind", {}),
                                          get_or<std::string>(e, "description", {}),
                                          get_field<double>(e, "score")});
        out.product_titles = get_or<std::vector<std::string>>(doc, "product_titles", {});
        out.similar_captions = get_or<std::vector<std::string>>(doc, "similar_captions", {});
        out.identical_captions = get_or<std::vector<std::string>>(doc, "identical_captions", {});
        return out;
    }
    if (kind == "ocr") {
        OcrText out;
        for (const auto& l : get_or<ojson>(doc, "lines", ojson::array()))
            out.lines.push_back(ScoredText{get_field<std::string>(l, "text"), get_field<double>(l, "score")});
        return out;
    }
    if (kind == "web_search") {
        std::vector<Snippet> snippets;
        for (const auto& s : get_or<ojson>(doc, "snippets", ojson::array()))
            snippets.push_back(Snippet{get_or<std::string>(s, "title", {}), get_field<std::string>(s, "content")});
        std::optional<std::string> panel;
        if (doc.contains("knowledge_panel") && !doc.at("knowledge_panel").is_null())
            panel = get_field<std::string>(doc, "knowledge_panel");
        return WebSearchResult(std::move(snippets), std::move(panel),
                               get_or<std::vector<std::string>>(doc, "related_questions", {}));
    }
    throw SchemaError("unknown tool payload kind '" + kind + "'");
}

std::string fixture_key(std::string_view tool, std::string_view query, std::string_view image_ref) {
    std::string key(tool);
    key += '\x1f';
    key += canonical_query(query);
    key += '\x1f';
    key += image_ref;
    return key;
}

} // namespace

std::string_view payload_kind(const ToolPayload& payload) {
    return std::visit(overloaded{
                          [](const Caption&) { return std::string_view("caption"); },
                          [](const VqaAnswer&) { return std::string_view("vqa_answer"); },
                          [](const Objects&) { return std::string_view("objects"); },
                          [](const ImageSearchResult&) { return std::string_view("image_search"); },
                          [](const OcrText&) { return std::string_view("ocr"); },
                          [](const WebSearchResult&) { return std::string_view("web_search"); },
                          [](const LlmAnswer&) { return std::string_view("llm_answer"); },
                      },
                      payload);
}

bool is_knowledge_payload(const ToolPayload& payload) {
    return std::holds_alternative<WebSearchResult>(payload) || std::holds_alternative<LlmAnswer>(payload);
}

ojson tool_output_to_json(const ToolOutput& output) {
    ojson doc;
    doc["tool"] = output.tool;
    doc["payload"] = payload_to_json(output.payload);
    return doc;
}

ToolOutput tool_output_from_json(const ojson& doc) {
    if (!doc.is_object()) throw SchemaError("tool output must be an object");
    return ToolOutput{get_field<std::string>(doc, "tool"), payload_from_json(get_field<ojson>(doc, "payload"))};
}

std::string render_tool_output(const ToolOutput& output) {
    std::vector<std::string> lines;
    std::visit(overloaded{
                   [&](const Caption& p) {
                       if (!text::trim(p.text).empty()) lines.push_back(item(p.text + " (Caption, whole image)"));
                   },
                   [&](const VqaAnswer& p) {
                       if (!text::trim(p.text).empty()) lines.push_back(item("Answer: " + p.text));
                   },
                   [&](const LlmAnswer& p) {
                       if (!text::trim(p.text).empty()) lines.push_back(item("Answer: " + p.text));
                   },
                   [&](const Objects& p) {
                       for (std::size_t i = 0; i < p.objects.size(); ++i)
                           lines.push_back(item(fmt::format("Object #{}: {}", i, p.objects[i].label),
                                                p.objects[i].score));
                   },
                   [&](const ImageSearchResult& p) {
                       for (const auto& e : p.entities) lines.push_back(entity_line(e));
                       for (const auto& t : p.product_titles) lines.push_back(item("product: " + t));
                       for (const auto& c : p.similar_captions) lines.push_back(item("similar image: " + c));
                       for (const auto& c : p.identical_captions) lines.push_back(item("identical image: " + c));
                   },
                   [&](const OcrText& p) {
                       for (const auto& l : p.lines) lines.push_back(item("Extracted Text: " + l.text, l.score));
                   },
                   [&](const WebSearchResult& p) {
                       if (p.knowledge_panel()) lines.push_back(item("Knowledge Panel: " + *p.knowledge_panel()));
                       for (const auto& s : p.snippets())
                           lines.push_back(item(s.title.empty() ? s.content : s.title + ": " + s.content));
                       for (const auto& q : p.related_questions()) lines.push_back(item("Related Question: " + q));
                   },
               },
               output.payload);
    return bracket(lines);
}

std::string canonical_query(std::string_view query) {
    return text::to_lower(text::collapse_whitespace(query));
}

std::vector<ToolFixture> load_tool_fixtures(std::string_view document) {
    std::vector<ToolFixture> out;
    auto lines = text::split_lines(document);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto where = fmt::format("tool fixture line {}", i + 1);
        try {
            auto rec = ojson::parse(lines[i]);
            ToolFixture f;
            f.tool = get_field<std::string>(rec, "tool");
            f.query = get_or<std::string>(rec, "query", {});
            f.image_ref = get_or<std::string>(rec, "image_ref", {});
            f.output = ToolOutput{f.tool, payload_from_json(get_field<ojson>(rec, "payload"))};
            out.push_back(std::move(f));
        } catch (const SchemaError& e) {
            throw SchemaError(where + ": " + e.what());
        } catch (const ojson::exception& e) {
            throw SchemaError(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<ToolFixture> load_tool_fixtures_file(const std::filesystem::path& path) {
    return load_tool_fixtures(text::read_file(path));
}

std::string serialize_tool_fixtures(const std::vector<ToolFixture>& fixtures) {
    std::string out;
    for (const auto& f : fixtures) {
        ojson rec;
        rec["tool"] = f.tool;
        rec["query"] = f.query;
        rec["image_ref"] = f.image_ref;
        rec["payload"] = payload_to_json(f.output.payload);
        out += rec.dump() + "\n";
    }
    return out;
}

MockToolBackend::MockToolBackend(std::vector<ToolFixture> fixtures) {
    for (auto& f : fixtures) {
        auto key = fixture_key(f.tool, f.query, f.image_ref);
        f.output.tool = f.tool;
        by_key_.insert_or_assign(std::move(key), std::move(f.output));
    }
}

ToolOutput MockToolBackend::invoke(const ToolRequest& request) {
    auto it = by_key_.find(fixture_key(request.tool, request.query, request.image_ref));
    if (it == by_key_.end())
        throw ToolUnavailable(fmt::format("no mock fixture for {}(query='{}', image='{}')", request.tool,
                                          request.query, request.image_ref));
    return it->second;
}

ToolOutput OracleQaBackend::invoke(const ToolRequest& request) {
    OracleRequest req;
    req.tag = OracleTag::LlmQa;
    req.prompt = "Answer the question with a short answer.\nQuestion: " + request.query + "\nAnswer:";
    try {
        return ToolOutput{request.tool, LlmAnswer{text::trim(complete(*oracle_, req))}};
    } catch (const OracleUnavailable& e) {
        throw ToolUnavailable(std::string("llm_qa backend: ") + e.what());
    }
}

std::optional<ToolOutput> ToolCache::lookup(const ToolRequest& request) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(fixture_key(request.tool, request.query, request.image_ref));
    if (it == entries_.end()) return std::nullopt;
    return it->second.output;
}

void ToolCache::store(const ToolRequest& request, const ToolOutput& output) {
    std::unique_lock lock(mutex_);
    entries_.insert_or_assign(fixture_key(request.tool, request.query, request.image_ref),
                              ToolFixture{request.tool, request.query, request.image_ref, output});
}

std::size_t ToolCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::vector<ToolFixture> ToolCache::entries() const {
    std::shared_lock lock(mutex_);
    std::vector<ToolFixture> out;
    for (const auto& [_, f] : entries_) out.push_back(f);
    return out;
}

void ToolCache::save(const std::filesystem::path& path) const {
    text::write_file(path, serialize_tool_fixtures(entries()));
}

std::shared_ptr<ToolCache> ToolCache::load(const std::filesystem::path& path) {
    auto cache = std::make_shared<ToolCache>();
    if (!std::filesystem::exists(path)) return cache;
    for (auto& f : load_tool_fixtures_file(path))
        cache->store(ToolRequest{f.tool, f.query, f.image_ref}, f.output);
    return cache;
}

std::string_view to_string(BackendKind kind) {
    switch (kind) {
    case BackendKind::Live: return "live";
    case BackendKind::Mock: return "mock";
    case BackendKind::Builtin: return "builtin";
    }
    return "mock";
}

std::vector<ToolSpec> load_tool_specs(const std::filesystem::path& path) {
    ojson doc;
    try {
        doc = ojson::parse(text::read_file(path));
    } catch (const ojson::parse_error& e) {
        throw SchemaError("tool manifest " + path.string() + ": " + e.what());
    }
    if (get_or<std::string>(doc, "schema", {}) != "vista.tools/v1")
        throw SchemaError("tool manifest " + path.string() + " has an unsupported schema");
    std::vector<ToolSpec> specs;
    for (const auto& t : get_field<ojson>(doc, "tools")) {
        ToolSpec s;
        s.name = get_field<std::string>(t, "name");
        s.needs_query = get_or<bool>(t, "needs_query", false);
        s.needs_image = get_or<bool>(t, "needs_image", true);
        s.description = get_field<std::string>(t, "description");
        auto backend = get_or<std::string>(t, "backend", "mock");
        if (backend == "live")
            s.backend = BackendKind::Live;
        else if (backend == "builtin")
            s.backend = BackendKind::Builtin;
        else if (backend == "mock")
            s.backend = BackendKind::Mock;
        else
            throw SchemaError("tool '" + s.name + "' has unknown backend '" + backend + "'");
        specs.push_back(std::move(s));
    }
    return specs;
}

std::filesystem::path default_tool_specs_path() {
    return std::filesystem::path(VISTA_DATA_DIR) / "tools" / "tools.json";
}

ToolRegistry::Builder& ToolRegistry::Builder::add(ToolSpec spec, std::shared_ptr<ToolBackend> backend) {
    if (spec.name.empty()) throw PreconditionError("tool spec without a name");
    if (spec.name == kAnswerAction) throw PreconditionError("'answer' is reserved");
    for (const auto& s : specs_)
        if (s.name == spec.name) throw PreconditionError("tool '" + spec.name + "' registered twice");
    if (spec.backend != BackendKind::Builtin && !backend)
        throw PreconditionError("tool '" + spec.name + "' needs a backend");
    if (backend) backends_[spec.name] = std::move(backend);
    specs_.push_back(std::move(spec));
    return *this;
}

ToolRegistry ToolRegistry::Builder::build() {
    ToolRegistry r;
    for (auto& s : specs_) {
        r.names_.push_back(s.name);
        if (auto it = backends_.find(s.name); it != backends_.end()) r.backends_.emplace(s.name, it->second);
        r.specs_.emplace(s.name, s);
    }
    return r;
}

bool ToolRegistry::contains(std::string_view name) const { return specs_.find(name) != specs_.end(); }

const ToolSpec& ToolRegistry::spec(std::string_view name) const {
    auto it = specs_.find(name);
    if (it == specs_.end()) throw UnknownTool("tool '" + std::string(name) + "' is not registered");
    return it->second;
}

std::shared_ptr<ToolBackend> ToolRegistry::backend(std::string_view name) const {
    auto it = backends_.find(name);
    return it == backends_.end() ? nullptr : it->second;
}

TaskInstructions ToolRegistry::instructions() const {
    TaskInstructions out;
    for (const auto& [name, spec] : specs_) out.emplace(name, spec.description);
    return out;
}

ToolRegistry ToolRegistry::without(const std::set<ActionId>& excluded) const {
    Builder b;
    for (const auto& n : names_) {
        if (excluded.contains(n)) continue;
        b.add(specs_.at(n), backend(n));
    }
    return b.build();
}

ToolOutput execute_tool(const ToolRegistry& registry, const ActionId& tool, std::string_view query,
                        std::string_view image_ref, ToolCache* cache) {
    const auto& spec = registry.spec(tool);
    if (spec.backend == BackendKind::Builtin)
        throw ToolUnavailable("tool '" + tool + "' is executed by the engine, not a backend");
    auto q = text::trim(query);
    if (spec.needs_query && q.empty()) throw BadQuery("tool '" + tool + "' needs a query");
    if (spec.needs_image && text::trim(image_ref).empty())
        throw BadQuery("tool '" + tool + "' needs an image ref");

    ToolRequest request{tool, spec.needs_query ? q : std::string{},
                        spec.needs_image ? std::string(image_ref) : std::string{}};
    if (cache) {
        if (auto hit = cache->lookup(request)) return *hit;
    }
    auto backend = registry.backend(tool);
    if (!backend) throw ToolUnavailable("tool '" + tool + "' has no backend");
    auto output = backend->invoke(request);
    output.tool = tool;
    if (cache) cache->store(request, output);
    return output;
}

} // namespace vista
