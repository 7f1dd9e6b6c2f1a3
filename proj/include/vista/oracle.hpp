// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vista {

enum class OracleTag { Planner, Reasoner, Decomposition, ObjectSelect, LlmQa };

std::string_view to_string(OracleTag tag);
std::optional<OracleTag> parse_oracle_tag(std::string_view name);

inline constexpr std::size_t kDefaultMaxOutput = 1024;

struct OracleRequest {
    std::string prompt;
    double temperature = 0.0;
    std::size_t max_output = kDefaultMaxOutput; // whitespace-delimited tokens
    OracleTag tag = OracleTag::Planner;
};

/// Text-in/text-out language model.
class OracleBackend {
public:
    virtual ~OracleBackend() = default;
    virtual std::string_view kind() const = 0;
    virtual std::string generate(const OracleRequest& request) = 0;
};

/// Validates the request, calls the backend, and enforces the output budget.
/// Throws PreconditionError, BudgetExceeded, or whatever the backend throws.
std::string complete(OracleBackend& backend, const OracleRequest& request);

/// Whitespace-collapsed prompt used for fixture keys.
std::string normalize_prompt(std::string_view prompt);

/// Stable hash of (tag, normalized prompt).
std::string fixture_key(OracleTag tag, std::string_view prompt);

struct OracleFixture {
    OracleTag tag = OracleTag::Planner;
    std::string prompt_hash;
    std::string prompt_excerpt; // tail of the normalized prompt
    std::string response;

    bool operator==(const OracleFixture&) const = default;
};

OracleFixture make_oracle_fixture(OracleTag tag, std::string_view prompt, std::string response);

/// Line-delimited {tag, prompt_hash, prompt_excerpt, response} records.
std::vector<OracleFixture> load_oracle_fixtures(std::string_view document);
std::vector<OracleFixture> load_oracle_fixtures_file(const std::string& path);
std::string serialize_oracle_fixtures(const std::vector<OracleFixture>& fixtures);

enum class FixtureMatch {
    Strict,
    /// On a hash miss, accept the unique same-tag fixture whose excerpt, from
    /// its last "Query: " on, occurs in the normalized prompt.
    Relaxed,
};

/// Pure lookup over recorded responses. Unknown prompts raise FixtureMiss.
class ScriptedOracle final : public OracleBackend {
public:
    explicit ScriptedOracle(std::vector<OracleFixture> fixtures,
                            FixtureMatch match = FixtureMatch::Strict);

    std::string_view kind() const override { return "scripted"; }
    std::string generate(const OracleRequest& request) override;

    std::size_t size() const noexcept { return fixtures_.size(); }

private:
    std::vector<OracleFixture> fixtures_;
    std::map<std::string, std::size_t> by_key_;
    FixtureMatch match_;
};

/// One recorded model call, as embedded in a trace.
struct OracleExchange {
    OracleTag tag = OracleTag::Planner;
    std::string prompt_hash;
    std::string response;
    std::size_t event_index = 0; // trace event that carried the exchange

    bool operator==(const OracleExchange&) const = default;
};

/// Serves recorded responses in order. A request whose tag or prompt hash does
/// not match the next recording raises ReplayDivergence.
class ReplayOracle final : public OracleBackend {
public:
    explicit ReplayOracle(std::vector<OracleExchange> exchanges);

    std::string_view kind() const override { return "replay"; }
    std::string generate(const OracleRequest& request) override;

    std::size_t remaining() const;

private:
    mutable std::mutex mutex_;
    std::vector<OracleExchange> exchanges_;
    std::size_t cursor_ = 0;
};

/// Wraps a callable. Used to embed in-process models and in tests.
class FunctionOracle final : public OracleBackend {
public:
    using Fn = std::function<std::string(const OracleRequest&)>;
    explicit FunctionOracle(Fn fn) : fn_(std::move(fn)) {}

    std::string_view kind() const override { return "function"; }
    std::string generate(const OracleRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

struct RemoteOracleConfig {
    std::string endpoint;               // e.g. http://localhost:8088
    std::string path = "/v1/complete";
    std::string token_env;              // env var holding a bearer token; empty for none
    std::chrono::milliseconds timeout{30000};
    int retries = 3;
    std::chrono::milliseconds backoff{200}; // doubled after every failed attempt
};

/// HTTP client: POST {schema, prompt, temperature, max_output, tag} -> {text}.
/// Transport failures and 5xx replies are retried; then OracleUnavailable.
class RemoteOracle final : public OracleBackend {
public:
    explicit RemoteOracle(RemoteOracleConfig config);

    std::string_view kind() const override { return "remote"; }
    std::string generate(const OracleRequest& request) override;

private:
    RemoteOracleConfig config_;
};

inline constexpr std::string_view kOracleWireSchema = "vista.oracle/v1";

} // namespace vista
