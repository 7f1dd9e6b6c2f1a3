// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vista/workspace.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace vista {

inline constexpr std::string_view kViewSchema = "vista.view/v1";

struct ServiceOptions {
    /// config_ref -> loaded workspace; requests without a config_ref use "default".
    std::map<std::string, Workspace> profiles;
    std::filesystem::path trace_dir;
    std::filesystem::path images_dir; // served under /images; empty disables the route
    std::vector<VisualQuestion> playlist;
    Mode human_collection = Mode::Unconstrained;
    std::string cors_origin = "*";
};

/// Step-wise sessions over HTTP: human trace collection and live agent runs.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to a free port and returns it; serve() then blocks until stop().
    int bind_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    void serve();
    void stop();

    TraceStore& store() noexcept { return store_; }

    struct Session;

private:
    void routes();
    std::shared_ptr<Session> find(const std::string& id) const;
    void run_agent(std::shared_ptr<Session> session);

    ServiceOptions options_;
    TraceStore store_;
    std::unique_ptr<httplib::Server> server_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::vector<std::thread> workers_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> counter_{0};
};

} // namespace vista
