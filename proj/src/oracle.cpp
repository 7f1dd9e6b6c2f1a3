// SPDX-License-Identifier: Apache-2.0
#include "vista/oracle.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

namespace vista {

namespace {

constexpr std::size_t kExcerptChars = 160;

std::size_t count_tokens(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::size_t n = 0;
    std::string word;
    while (in >> word) ++n;
    return n;
}

} // namespace

std::string_view to_string(OracleTag tag) {
    switch (tag) {
    case OracleTag::Planner: return "planner";
    case OracleTag::Reasoner: return "reasoner";
    case OracleTag::Decomposition: return "decomposition";
    case OracleTag::ObjectSelect: return "object_select";
    case OracleTag::LlmQa: return "llm_qa";
    }
    return "planner";
}

std::optional<OracleTag> parse_oracle_tag(std::string_view name) {
    for (auto t : {OracleTag::Planner, OracleTag::Reasoner, OracleTag::Decomposition,
                   OracleTag::ObjectSelect, OracleTag::LlmQa})
        if (to_string(t) == name) return t;
    return std::nullopt;
}

std::string complete(OracleBackend& backend, const OracleRequest& request) {
    if (request.temperature < 0.0 || request.temperature > 1.0)
        throw PreconditionError(fmt::format("temperature {} outside [0, 1]", request.temperature));
    if (request.max_output == 0) throw PreconditionError("max_output must be positive");
    if (text::trim(request.prompt).empty()) throw PreconditionError("oracle prompt is empty");
    auto text = backend.generate(request);
    if (count_tokens(text) > request.max_output)
        throw BudgetExceeded(fmt::format("{} oracle reply exceeds {} tokens", backend.kind(),
                                         request.max_output));
    return text;
}

std::string normalize_prompt(std::string_view prompt) { return text::collapse_whitespace(prompt); }

std::string fixture_key(OracleTag tag, std::string_view prompt) {
    std::string material(to_string(tag));
    material += '\n';
    material += normalize_prompt(prompt);
    return text::hash_hex(material);
}

OracleFixture make_oracle_fixture(OracleTag tag, std::string_view prompt, std::string response) {
    auto norm = normalize_prompt(prompt);
    auto excerpt = norm.size() > kExcerptChars ? norm.substr(norm.size() - kExcerptChars) : norm;
    return OracleFixture{tag, fixture_key(tag, prompt), std::move(excerpt), std::move(response)};
}

std::vector<OracleFixture> load_oracle_fixtures(std::string_view document) {
    std::vector<OracleFixture> out;
    auto lines = text::split_lines(document);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto where = fmt::format("oracle fixture line {}", i + 1);
        try {
            auto rec = nlohmann::json::parse(lines[i]);
            auto tag = parse_oracle_tag(rec.at("tag").get<std::string>());
            if (!tag) throw SchemaError(where + ": unknown tag");
            out.push_back(OracleFixture{*tag, rec.at("prompt_hash").get<std::string>(),
                                        rec.value("prompt_excerpt", std::string{}),
                                        rec.at("response").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<OracleFixture> load_oracle_fixtures_file(const std::string& path) {
    return load_oracle_fixtures(text::read_file(path));
}

std::string serialize_oracle_fixtures(const std::vector<OracleFixture>& fixtures) {
    std::string out;
    for (const auto& f : fixtures) {
        nlohmann::ordered_json rec;
        rec["tag"] = to_string(f.tag);
        rec["prompt_hash"] = f.prompt_hash;
        rec["prompt_excerpt"] = f.prompt_excerpt;
        rec["response"] = f.response;
        out += rec.dump() + "\n";
    }
    return out;
}

ScriptedOracle::ScriptedOracle(std::vector<OracleFixture> fixtures, FixtureMatch match)
    : fixtures_(std::move(fixtures)), match_(match) {
    for (std::size_t i = 0; i < fixtures_.size(); ++i) {
        std::string key(to_string(fixtures_[i].tag));
        key += ':' + fixtures_[i].prompt_hash;
        auto [it, inserted] = by_key_.emplace(key, i);
        if (!inserted && fixtures_[it->second].response != fixtures_[i].response)
            throw SchemaError("conflicting oracle fixtures for prompt hash " + fixtures_[i].prompt_hash);
    }
}

std::string ScriptedOracle::generate(const OracleRequest& request) {
    auto hash = fixture_key(request.tag, request.prompt);
    auto it = by_key_.find(std::string(to_string(request.tag)) + ':' + hash);
    if (it != by_key_.end()) return fixtures_[it->second].response;

    if (match_ == FixtureMatch::Relaxed) {
        auto norm = normalize_prompt(request.prompt);
        const OracleFixture* found = nullptr;
        std::size_t hits = 0;
        for (const auto& f : fixtures_) {
            if (f.tag != request.tag || f.prompt_excerpt.empty()) continue;
            // Exemplars ahead of the step-specific part depend on the feasible set.
            auto at = f.prompt_excerpt.rfind("Query: ");
            auto needle = std::string_view(f.prompt_excerpt).substr(at == std::string::npos ? 0 : at);
            if (norm.find(needle) == std::string::npos) continue;
            if (found && found->response == f.response) continue;
            found = &f;
            ++hits;
        }
        if (hits == 1) return found->response;
    }
    auto norm = normalize_prompt(request.prompt);
    auto tail = norm.size() > 80 ? "..." + norm.substr(norm.size() - 80) : norm;
    throw FixtureMiss(fmt::format("no {} fixture for prompt {} ({})", to_string(request.tag), hash,
                                  tail));
}

ReplayOracle::ReplayOracle(std::vector<OracleExchange> exchanges)
    : exchanges_(std::move(exchanges)) {}

std::string ReplayOracle::generate(const OracleRequest& request) {
    std::lock_guard lock(mutex_);
    if (cursor_ >= exchanges_.size())
        throw ReplayDivergence(exchanges_.empty() ? 0 : exchanges_.back().event_index + 1,
                               "replay requested more oracle calls than were recorded");
    const auto& next = exchanges_[cursor_];
    auto hash = fixture_key(request.tag, request.prompt);
    if (next.tag != request.tag || next.prompt_hash != hash)
        throw ReplayDivergence(next.event_index,
                               fmt::format("oracle call {} differs from the recording "
                                           "(expected {}:{}, got {}:{})",
                                           cursor_, to_string(next.tag), next.prompt_hash,
                                           to_string(request.tag), hash));
    ++cursor_;
    return next.response;
}

std::size_t ReplayOracle::remaining() const {
    std::lock_guard lock(mutex_);
    return exchanges_.size() - cursor_;
}

} // namespace vista
