// SPDX-License-Identifier: Apache-2.0
#include "vista/eval.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"

namespace vista {

using ojson = nlohmann::ordered_json;

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::optional<double> as_number(std::string_view s) {
    std::string str(s);
    if (str.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(str.c_str(), &end);
    if (end != str.c_str() + str.size()) return std::nullopt;
    return v;
}

std::optional<std::pair<double, double>> as_range(std::string_view gold) {
    static const std::regex re(R"(^\s*(-?\d+(?:\.\d+)?)\s*(?:-|to)\s*(-?\d+(?:\.\d+)?)\s*$)", std::regex::icase);
    std::string s(gold);
    std::smatch m;
    if (!std::regex_match(s, m, re)) return std::nullopt;
    double lo = std::stod(m[1].str());
    double hi = std::stod(m[2].str());
    if (lo > hi) std::swap(lo, hi);
    return std::make_pair(lo, hi);
}

DatasetRecord validated(DatasetRecord r, const std::string& where) {
    if (text::trim(r.id).empty()) throw SchemaError(where + ": record without id");
    if (text::trim(r.question).empty()) throw SchemaError(where + ": record '" + r.id + "' has no question");
    if (text::trim(r.image_ref).empty()) throw SchemaError(where + ": record '" + r.id + "' has no image_ref");
    if (r.gold_answers.empty()) throw SchemaError(where + ": record '" + r.id + "' has no gold answers");
    return r;
}

Split split_or_throw(const std::string& name, const std::string& where) {
    if (name.empty()) return Split::Custom;
    auto s = parse_split(name);
    if (!s) throw SchemaError(where + ": unknown split '" + name + "'");
    return *s;
}

std::vector<std::string> split_on(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.size() - start : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

} // namespace

std::string_view to_string(Split split) {
    switch (split) {
    case Split::UnseenEntity: return "unseen_entity";
    case Split::UnseenQuestion: return "unseen_question";
    case Split::Val: return "val";
    case Split::Custom: return "custom";
    }
    return "custom";
}

std::optional<Split> parse_split(std::string_view name) {
    for (auto s : {Split::UnseenEntity, Split::UnseenQuestion, Split::Val, Split::Custom})
        if (to_string(s) == name) return s;
    return std::nullopt;
}

VisualQuestion DatasetRecord::to_question() const { return VisualQuestion{id, image_ref, question, gold_answers}; }

std::vector<DatasetRecord> parse_dataset(std::string_view document, DatasetFormat format) {
    std::vector<DatasetRecord> out;
    std::set<std::string> ids;
    auto lines = text::split_lines(document);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto where = fmt::format("dataset line {}", i + 1);
        DatasetRecord r;
        if (format == DatasetFormat::Jsonl) {
            try {
                auto doc = ojson::parse(lines[i]);
                r.id = doc.at("id").get<std::string>();
                r.image_ref = doc.at("image_ref").get<std::string>();
                r.question = doc.at("question").get<std::string>();
                r.gold_answers = doc.at("answers").get<std::vector<std::string>>();
                r.split = split_or_throw(doc.value("split", std::string{}), where);
            } catch (const ojson::exception& e) {
                throw SchemaError(where + ": " + e.what());
            }
        } else {
            auto cols = split_on(lines[i], '\t');
            if (out.empty() && ids.empty() && !cols.empty() && text::trim(cols[0]) == "id") continue;
            if (cols.size() < 4) throw SchemaError(where + ": expected at least 4 tab-separated columns");
            r.id = text::trim(cols[0]);
            r.image_ref = text::trim(cols[1]);
            r.question = text::trim(cols[2]);
            for (auto& a : split_on(cols[3], '|'))
                if (auto t = text::trim(a); !t.empty()) r.gold_answers.push_back(t);
            r.split = split_or_throw(cols.size() > 4 ? text::trim(cols[4]) : std::string{}, where);
        }
        r = validated(std::move(r), where);
        if (!ids.insert(r.id).second) throw SchemaError(where + ": duplicate id '" + r.id + "'");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path, std::optional<DatasetFormat> format) {
    if (!format) format = path.extension() == ".tsv" ? DatasetFormat::Tsv : DatasetFormat::Jsonl;
    return parse_dataset(text::read_file(path), *format);
}

std::string normalize_answer(std::string_view answer) {
    auto s = text::to_lower(answer);
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        bool between_digits = i > 0 && i + 1 < s.size() && is_digit(s[i - 1]) && is_digit(s[i + 1]);
        if (c == '.') {
            if (between_digits) out += c;
        } else if (c == ',') {
            if (!between_digits) out += ' ';
        } else if (c == '\'') {
        } else if (std::ispunct(static_cast<unsigned char>(c))) {
            out += ' ';
        } else {
            out += c;
        }
    }
    std::istringstream in(out);
    std::vector<std::string> words;
    for (std::string w; in >> w;)
        if (w != "a" && w != "an" && w != "the") words.push_back(std::move(w));
    return text::join(words, " ");
}

double vqa_accuracy(std::string_view prediction, const std::vector<std::string>& gold_answers,
                    const AccuracyOptions& options) {
    if (gold_answers.empty()) throw PreconditionError("accuracy needs at least one gold answer");
    auto pred = normalize_answer(prediction);
    if (pred.empty()) return 0.0;
    const auto parsed = options.numeric_range ? as_number(pred) : std::nullopt;
    const bool numeric = parsed.has_value();
    const double value = parsed.value_or(0.0);
    std::size_t matches = 0;
    for (const auto& g : gold_answers) {
        if (normalize_answer(g) == pred) {
            ++matches;
            continue;
        }
        if (numeric)
            if (auto range = as_range(g); range && range->first <= value && value <= range->second)
                ++matches;
    }
    if (gold_answers.size() == 1) return matches > 0 ? 1.0 : 0.0;
    return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

std::string ablation_label(const std::set<ActionId>& excluded) {
    if (excluded.empty()) return {};
    static const std::vector<std::pair<std::string, std::set<ActionId>>> groups = {
        {"VisualQA", {"caption", "vqa"}},
        {"Object", {"object_detection", "object_select"}},
        {"Search", {"web_search", "image_search", "identical_image_search"}},
    };
    for (const auto& [name, tools] : groups)
        if (tools == excluded) return "w/o " + name;
    return "w/o " + text::join(std::vector<std::string>(excluded.begin(), excluded.end()), "+");
}

SessionConfig ablate(const SessionConfig& config, const std::set<ActionId>& excluded) {
    validate_config(config);
    if (excluded.empty()) return config;
    for (const auto& t : excluded)
        if (!config.registry->contains(t)) throw PreconditionError("ablated tool '" + t + "' is not registered");
    if (excluded.size() >= config.registry->size())
        throw PreconditionError("an ablation must leave at least one tool");
    auto out = config;
    out.registry = std::make_shared<const ToolRegistry>(config.registry->without(excluded));
    out.graph = std::make_shared<const TransitionGraph>(config.graph->without_actions(excluded));
    return out;
}

EvalReport run_experiment(const std::vector<DatasetRecord>& dataset, const SessionConfig& config,
                          const ExperimentSpec& spec) {
    auto base = ablate(config, spec.ablation);
    std::optional<std::vector<ActionId>> pipeline;
    if (spec.pipeline) {
        pipeline.emplace();
        for (const auto& t : *spec.pipeline)
            if (!spec.ablation.contains(t)) pipeline->push_back(t);
        if (pipeline->empty()) throw PreconditionError("the ablation removes every tool of the pipeline");
    }

    EvalReport report;
    report.label = spec.label;
    if (report.label.empty()) {
        report.label = pipeline ? "baseline:" + text::join(*spec.pipeline, "+") : "agent-" + std::string(to_string(base.mode));
        if (!spec.ablation.empty()) report.label += " " + ablation_label(spec.ablation);
    }
    report.rows.resize(dataset.size());
    report.traces.resize(dataset.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < dataset.size(); i = next++) {
            const auto& rec = dataset[i];
            EvalRow row;
            row.id = rec.id;
            row.metric = rec.gold_answers.size() == 1 ? "exact" : "soft";
            auto cfg = base;
            cfg.session_id = default_session_id(rec.to_question(), "eval", report.label);
            try {
                auto result = pipeline ? run_sequential_baseline(*pipeline, cfg, rec.to_question())
                                       : run(cfg, rec.to_question());
                row.status = result.status;
                row.prediction = result.answer;
                row.error = result.error;
                row.tools = tool_calls(result.trace);
                row.session_id = result.trace.session_id;
                if (result.status == RunStatus::Answered && result.answer)
                    row.score = vqa_accuracy(*result.answer, rec.gold_answers, spec.accuracy);
                if (spec.store) spec.store->save(result.trace);
                report.traces[i] = std::move(result.trace);
            } catch (const std::exception& e) {
                row.status = RunStatus::Error;
                row.score = 0.0;
                row.error = e.what();
            }
            report.rows[i] = std::move(row);
        }
    };
    auto n = std::max<std::size_t>(1, std::min(spec.workers, dataset.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    double sum = 0.0;
    for (const auto& row : report.rows) {
        sum += row.score;
        ++report.status_counts[std::string(to_string(row.status))];
        for (const auto& t : row.tools) ++report.tool_usage[t];
    }
    report.mean = report.rows.empty() ? 0.0 : sum / static_cast<double>(report.rows.size());
    return report;
}

std::string serialize_report(const EvalReport& report) {
    ojson doc;
    doc["schema"] = "vista.report/v1";
    doc["label"] = report.label;
    ojson rows = ojson::array();
    for (const auto& r : report.rows) {
        ojson row;
        row["id"] = r.id;
        if (r.prediction)
            row["prediction"] = *r.prediction;
        else
            row["prediction"] = nullptr;
        row["score"] = r.score;
        row["metric"] = r.metric;
        row["status"] = to_string(r.status);
        row["tools"] = r.tools;
        row["session_id"] = r.session_id;
        if (!r.error.empty()) row["error"] = r.error;
        rows.push_back(std::move(row));
    }
    doc["rows"] = std::move(rows);
    ojson summary;
    summary["records"] = report.rows.size();
    summary["mean_accuracy"] = report.mean;
    summary["status_counts"] = report.status_counts;
    summary["tool_usage"] = report.tool_usage;
    doc["summary"] = std::move(summary);
    return doc.dump(2) + "\n";
}

} // namespace vista
