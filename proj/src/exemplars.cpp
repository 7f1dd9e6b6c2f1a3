// SPDX-License-Identifier: Apache-2.0
#include "vista/exemplars.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <set>

#include <fmt/format.h>

#include "json.hpp"

namespace vista {

std::string_view to_string(ExemplarKind kind) {
    switch (kind) {
    case ExemplarKind::Planner: return "planner";
    case ExemplarKind::Reasoner: return "reasoner";
    case ExemplarKind::Decomposition: return "decomposition";
    case ExemplarKind::ObjectSelect: return "object_select";
    }
    return "planner";
}

std::optional<ExemplarKind> parse_exemplar_kind(std::string_view name) {
    for (auto k : {ExemplarKind::Planner, ExemplarKind::Reasoner, ExemplarKind::Decomposition,
                   ExemplarKind::ObjectSelect})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

ExemplarStore ExemplarStore::from_records(std::vector<Exemplar> records) {
    ExemplarStore store;
    std::set<std::string> ids;
    for (auto& ex : records) {
        if (ex.id.empty()) throw SchemaError("exemplar without id");
        if (!ids.insert(ex.id).second) throw SchemaError("duplicate exemplar id '" + ex.id + "'");
        if (text::trim(ex.body).empty()) throw SchemaError("exemplar '" + ex.id + "' has an empty body");
        if (ex.kind == ExemplarKind::Planner) {
            if (ex.action.empty())
                throw SchemaError("planner exemplar '" + ex.id + "' names no action");
            store.by_action_[ex.action].push_back(std::move(ex));
        } else {
            store.by_kind_[ex.kind].push_back(std::move(ex));
        }
        ++store.size_;
    }
    return store;
}

const std::vector<Exemplar>& ExemplarStore::for_action(std::string_view action) const {
    static const std::vector<Exemplar> none;
    auto it = by_action_.find(action);
    return it == by_action_.end() ? none : it->second;
}

std::vector<Exemplar> ExemplarStore::of_kind(ExemplarKind kind, std::string_view action) const {
    std::vector<Exemplar> out;
    auto it = by_kind_.find(kind);
    if (it == by_kind_.end()) return out;
    for (const auto& ex : it->second)
        if (action.empty() || ex.action == action) out.push_back(ex);
    return out;
}

ExemplarStore load_exemplars(std::string_view document) {
    std::vector<Exemplar> records;
    auto lines = text::split_lines(document);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto where = fmt::format("exemplar line {}", i + 1);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(lines[i]);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(where + ": " + e.what());
        }
        if (!rec.is_object()) throw SchemaError(where + ": record must be an object");
        auto field = [&](const char* key, bool required) -> std::string {
            if (!rec.contains(key)) {
                if (required) throw SchemaError(where + ": missing '" + key + "'");
                return {};
            }
            if (!rec.at(key).is_string()) throw SchemaError(where + ": '" + key + "' must be a string");
            return rec.at(key).get<std::string>();
        };
        Exemplar ex;
        ex.id = field("id", true);
        auto kind = parse_exemplar_kind(field("kind", true));
        if (!kind) throw SchemaError(where + ": unknown kind '" + rec.at("kind").get<std::string>() + "'");
        ex.kind = *kind;
        ex.action = field("action", false);
        ex.query = field("query", false);
        ex.context = field("context", false);
        ex.body = field("body", true);
        records.push_back(std::move(ex));
    }
    return ExemplarStore::from_records(std::move(records));
}

ExemplarStore load_exemplars_file(const std::filesystem::path& path) {
    return load_exemplars(text::read_file(path));
}

std::filesystem::path default_exemplars_path() {
    return std::filesystem::path(VISTA_DATA_DIR) / "exemplars" / "default.jsonl";
}

std::vector<Exemplar> select_exemplars(const ExemplarStore& store, const FeasibleActionSet& actions,
                                       std::size_t budget) {
    std::vector<Exemplar> out;
    if (budget == 0) throw PreconditionError("exemplar budget must be at least 1");
    for (std::size_t round = 0; out.size() < budget; ++round) {
        bool any = false;
        for (const auto& a : actions.actions) {
            const auto& bucket = store.for_action(a);
            if (round >= bucket.size()) continue;
            any = true;
            out.push_back(bucket[round]);
            if (out.size() == budget) break;
        }
        if (!any) break;
    }
    return out;
}

} // namespace vista
