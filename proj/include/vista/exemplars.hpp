// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/graph.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vista {

enum class ExemplarKind { Planner, Reasoner, Decomposition, ObjectSelect };

std::string_view to_string(ExemplarKind kind);
std::optional<ExemplarKind> parse_exemplar_kind(std::string_view name);

/// One recorded decision, used verbatim inside a prompt.
///
/// For planner exemplars `action` is the tool the person picked. Reasoner
/// exemplars use it to say which reasoner prompt they belong to ("visual"
/// or "knowledge"); the other kinds leave it empty.
struct Exemplar {
    std::string id;
    ExemplarKind kind = ExemplarKind::Planner;
    ActionId action;
    std::string query;
    std::string context;
    std::string body;

    bool operator==(const Exemplar&) const = default;
};

inline constexpr std::size_t kDefaultExemplarBudget = 10;

class ExemplarStore {
public:
    ExemplarStore() = default;

    /// Validates ids (unique, non-empty), bodies and planner actions.
    /// Throws SchemaError.
    static ExemplarStore from_records(std::vector<Exemplar> records);

    /// Planner exemplars recorded for `action`, in file order.
    const std::vector<Exemplar>& for_action(std::string_view action) const;

    /// Non-planner exemplars of `kind`, optionally narrowed to one `action` label.
    std::vector<Exemplar> of_kind(ExemplarKind kind, std::string_view action = {}) const;

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

private:
    std::map<ActionId, std::vector<Exemplar>, std::less<>> by_action_;
    std::map<ExemplarKind, std::vector<Exemplar>> by_kind_;
    std::size_t size_ = 0;
};

/// Parses the line-delimited exemplar format. Blank lines are skipped.
ExemplarStore load_exemplars(std::string_view document);
ExemplarStore load_exemplars_file(const std::filesystem::path& path);
std::filesystem::path default_exemplars_path();

/// Round-robin over the feasible actions in order, taking each action's
/// exemplars in stored order, until `budget` exemplars are chosen.
std::vector<Exemplar> select_exemplars(const ExemplarStore& store, const FeasibleActionSet& actions,
                                       std::size_t budget = kDefaultExemplarBudget);

} // namespace vista
