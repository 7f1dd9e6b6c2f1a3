// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/engine.hpp"
#include "vista/trace.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vista {

enum class Split { UnseenEntity, UnseenQuestion, Val, Custom };
std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view name);

struct DatasetRecord {
    std::string id;
    std::string image_ref;
    std::string question;
    std::vector<std::string> gold_answers; // never empty
    Split split = Split::Custom;

    VisualQuestion to_question() const;
    bool operator==(const DatasetRecord&) const = default;
};

enum class DatasetFormat { Jsonl, Tsv };

/// JSONL: {id, image_ref, question, answers, split}. TSV: the same columns
/// with answers joined by '|', an optional header row starting with "id".
/// Throws SchemaError naming the line.
std::vector<DatasetRecord> parse_dataset(std::string_view document, DatasetFormat format = DatasetFormat::Jsonl);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                        std::optional<DatasetFormat> format = std::nullopt);

/// Lowercase; drop periods except decimal points and commas inside numbers;
/// drop apostrophes; other punctuation becomes space; drop a/an/the; collapse
/// whitespace.
std::string normalize_answer(std::string_view answer);

struct AccuracyOptions {
    /// A numeric prediction also matches a gold written as a range "lo - hi"
    /// when lo <= prediction <= hi.
    bool numeric_range = false;
};

/// min(matches / 3, 1) over normalized answers; exact match for a single
/// gold. Throws PreconditionError when `gold_answers` is empty.
double vqa_accuracy(std::string_view prediction, const std::vector<std::string>& gold_answers,
                    const AccuracyOptions& options = {});

struct EvalRow {
    std::string id;
    std::optional<std::string> prediction;
    double score = 0.0;
    RunStatus status = RunStatus::NoAnswer;
    std::string metric; // "soft" or "exact"
    std::vector<ActionId> tools;
    std::string session_id;
    std::string error;

    bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
    std::string label;
    std::vector<EvalRow> rows; // dataset order
    double mean = 0.0;
    std::map<std::string, std::size_t> status_counts;
    std::map<ActionId, std::size_t> tool_usage;
    std::vector<RunTrace> traces;
};

struct ExperimentSpec {
    std::string label;                                // empty: derived from pipeline/ablation
    std::optional<std::vector<ActionId>> pipeline;    // set: sequential baseline
    std::set<ActionId> ablation;
    std::size_t workers = 1;
    AccuracyOptions accuracy;
    TraceStore* store = nullptr; // persists every trace when set
};

/// "w/o Search" style label for the named tool groups, otherwise "w/o " and
/// the sorted tool names joined by '+'. Empty for no ablation.
std::string ablation_label(const std::set<ActionId>& excluded);

/// Registry and graph with the excluded tools removed. Throws
/// PreconditionError unless `excluded` is a proper subset of the registry.
SessionConfig ablate(const SessionConfig& config, const std::set<ActionId>& excluded);

EvalReport run_experiment(const std::vector<DatasetRecord>& dataset, const SessionConfig& config,
                          const ExperimentSpec& spec);

/// JSON report: label, per-record rows, summary block.
std::string serialize_report(const EvalReport& report);

} // namespace vista
