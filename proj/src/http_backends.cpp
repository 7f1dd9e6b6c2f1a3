// SPDX-License-Identifier: Apache-2.0
// Wire clients for a remote language model and remote tool endpoints.
#include "vista/error.hpp"
#include "vista/oracle.hpp"
#include "vista/tools.hpp"

#include <cstdlib>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"
#include "json.hpp"

namespace vista {

using ojson = nlohmann::ordered_json;

namespace {

httplib::Headers auth_headers(const std::string& token_env) {
    httplib::Headers h;
    if (token_env.empty()) return h;
    const char* token = std::getenv(token_env.c_str());
    if (token && *token) h.emplace("Authorization", std::string("Bearer ") + token);
    return h;
}

httplib::Client make_client(const std::string& endpoint, std::chrono::milliseconds timeout) {
    httplib::Client client(endpoint);
    if (!client.is_valid()) throw PreconditionError("invalid endpoint '" + endpoint + "'");
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    return client;
}

} // namespace

RemoteOracle::RemoteOracle(RemoteOracleConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw PreconditionError("remote oracle needs an endpoint");
    if (config_.retries < 0) throw PreconditionError("retries must be non-negative");
}

std::string RemoteOracle::generate(const OracleRequest& request) {
    ojson body;
    body["schema"] = kOracleWireSchema;
    body["prompt"] = request.prompt;
    body["temperature"] = request.temperature;
    body["max_output"] = request.max_output;
    body["tag"] = to_string(request.tag);
    const auto payload = body.dump();

    auto client = make_client(config_.endpoint, config_.timeout);
    auto delay = config_.backoff;
    std::string last;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        auto res = client.Post(config_.path, auth_headers(config_.token_env), payload, "application/json");
        if (!res) {
            last = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last = fmt::format("server error {}", res->status);
            continue;
        }
        if (res->status != 200) throw OracleUnavailable(fmt::format("oracle rejected the request ({}): {}", res->status, res->body));
        try {
            auto reply = ojson::parse(res->body);
            return reply.at("text").get<std::string>();
        } catch (const ojson::exception& e) {
            throw OracleUnavailable(std::string("malformed oracle reply: ") + e.what());
        }
    }
    throw OracleUnavailable(fmt::format("oracle at {} unavailable after {} attempts: {}", config_.endpoint,
                                        config_.retries + 1, last));
}

HttpToolBackend::HttpToolBackend(HttpToolConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw PreconditionError("tool backend needs an endpoint");
}

ToolOutput HttpToolBackend::invoke(const ToolRequest& request) {
    ojson body;
    body["schema"] = kToolWireSchema;
    body["tool"] = request.tool;
    body["query"] = request.query;
    body["image_ref"] = request.image_ref;

    auto client = make_client(config_.endpoint, config_.timeout);
    auto res = client.Post("/v1/tools/" + request.tool, auth_headers(config_.token_env), body.dump(), "application/json");
    if (!res) throw ToolUnavailable(request.tool + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw ToolUnavailable(fmt::format("{}: HTTP {}", request.tool, res->status));
    try {
        ojson doc;
        doc["tool"] = request.tool;
        doc["payload"] = ojson::parse(res->body);
        return tool_output_from_json(doc);
    } catch (const std::exception& e) {
        throw ToolUnavailable(fmt::format("{}: malformed reply: {}", request.tool, e.what()));
    }
}

} // namespace vista
