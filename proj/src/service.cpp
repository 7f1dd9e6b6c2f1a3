// SPDX-License-Identifier: Apache-2.0
#include "vista/service.hpp"

#include "vista/error.hpp"
#include "vista/text.hpp"

#include <condition_variable>

#include <fmt/format.h>

#include "httplib.h"
#include "json.hpp"

namespace vista {

using ojson = nlohmann::ordered_json;

struct Service::Session {
    std::string id;
    std::string profile;
    bool agent = false;
    Mode constraint = Mode::Unconstrained;
    VisualQuestion question;

    std::mutex mutex;
    std::condition_variable cv;
    std::unique_ptr<HumanSession> human;

    std::unique_ptr<AgentSession> runner;
    std::vector<TraceEvent> events;
    bool done = false;
    std::string status = "running";
    std::optional<std::string> answer;
};

namespace {

struct HttpError : std::runtime_error {
    int status;
    std::string kind;
    HttpError(int s, std::string k, const std::string& msg) : std::runtime_error(msg), status(s), kind(std::move(k)) {}
};

void send_json(httplib::Response& res, const ojson& doc, int status = 200) {
    res.status = status;
    res.set_content(doc.dump(), "application/json");
}

ojson parse_body(const httplib::Request& req) {
    try {
        auto doc = ojson::parse(req.body.empty() ? std::string("{}") : req.body);
        if (!doc.is_object()) throw HttpError(400, "SchemaError", "request body must be an object");
        return doc;
    } catch (const ojson::parse_error& e) {
        throw HttpError(400, "SchemaError", std::string("malformed JSON: ") + e.what());
    }
}

std::string string_field(const ojson& doc, const char* key, bool required) {
    if (!doc.contains(key) || doc.at(key).is_null()) {
        if (required) throw HttpError(400, "SchemaError", fmt::format("missing field '{}'", key));
        return {};
    }
    if (!doc.at(key).is_string()) throw HttpError(400, "SchemaError", fmt::format("field '{}' must be a string", key));
    return doc.at(key).get<std::string>();
}

std::string image_url(const std::string& ref) {
    auto path = ref.substr(0, ref.find('#'));
    if (path.rfind("images/", 0) == 0) return "/" + path;
    return path;
}

ojson question_view(const VisualQuestion& q) {
    return ojson{{"id", q.id}, {"image_ref", q.image_ref}, {"image_url", image_url(q.image_ref)}, {"question", q.question}};
}

ojson output_view(const ToolOutput& out) {
    auto doc = tool_output_to_json(out);
    doc["rendered"] = render_tool_output(out);
    return doc;
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const HttpError& e) {
        send_json(res, ojson{{"error", e.kind}, {"message", e.what()}}, e.status);
    } catch (const PreconditionError& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 409);
    } catch (const UnknownTool& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 422);
    } catch (const BadQuery& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 422);
    } catch (const IndexOutOfRange& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 422);
    } catch (const ToolUnavailable& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 503);
    } catch (const OracleUnavailable& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 503);
    } catch (const std::exception& e) {
        send_json(res, ojson{{"error", error_kind(e)}, {"message", e.what()}}, 500);
    }
}

std::optional<TraceMode> mode_filter(const httplib::Request& req) {
    if (!req.has_param("mode")) return std::nullopt;
    auto m = parse_trace_mode(req.get_param_value("mode"));
    if (!m) throw HttpError(400, "SchemaError", "unknown trace mode '" + req.get_param_value("mode") + "'");
    return m;
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const auto v = req.get_param_value(key);
    try {
        std::size_t pos = 0;
        auto n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw HttpError(400, "SchemaError", fmt::format("parameter '{}' must be a non-negative integer", key));
    }
}

} // namespace

Service::Service(ServiceOptions options)
    : options_(std::move(options)), store_(options_.trace_dir), server_(std::make_unique<httplib::Server>()) {
    if (options_.profiles.empty()) throw PreconditionError("service needs at least one config profile");
    if (options_.trace_dir.empty()) throw PreconditionError("service needs a trace directory");
    routes();
}

Service::~Service() { stop(); }

int Service::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }
bool Service::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }
void Service::serve() { server_->listen_after_bind(); }

void Service::stop() {
    stopping_ = true;
    server_->stop();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        workers.swap(workers_);
    }
    for (auto& t : workers)
        if (t.joinable()) t.join();
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError(404, "NotFound", "unknown session '" + id + "'");
    return it->second;
}

void Service::run_agent(std::shared_ptr<Session> s) {
    auto publish = [&] {
        std::lock_guard lock(s->mutex);
        const auto& all = s->runner->trace().events;
        for (auto i = s->events.size(); i < all.size(); ++i) s->events.push_back(all[i]);
        s->cv.notify_all();
    };
    try {
        while (!stopping_ && s->runner->step()) publish();
        publish();
        if (!s->runner->done()) return;
        auto result = s->runner->result();
        store_.save(result.trace);
        std::lock_guard lock(s->mutex);
        s->status = std::string(to_string(result.status));
        s->answer = result.answer;
        s->done = true;
    } catch (const std::exception&) {
        std::lock_guard lock(s->mutex);
        s->status = "Error";
        s->done = true;
    }
    s->cv.notify_all();
}

void Service::routes() {
    auto& srv = *server_;
    srv.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (!options_.images_dir.empty()) srv.set_mount_point("/images", options_.images_dir.string());

    auto human_view = [this](Session& s) {
        const auto& h = *s.human;
        const auto& profile = options_.profiles.at(s.profile);
        const auto& registry = *profile.registry;
        ojson actions = ojson::array();
        auto available = h.available();
        for (const auto& a : available.actions) {
            if (a == "object_select") continue;
            const auto& spec = registry.spec(a);
            actions.push_back(ojson{{"tool", a}, {"label", a}, {"description", spec.description},
                                    {"needs_query", spec.needs_query}});
        }
        ojson objects = ojson::array();
        const bool can_select = available.contains("object_select");
        bool per_box_search = can_select && registry.contains("image_search");
        if (per_box_search && s.constraint == Mode::Constrained) {
            const auto& next = profile.graph->edges("object_select");
            per_box_search = std::find(next.begin(), next.end(), "image_search") != next.end();
        }
        for (std::size_t k = 0; k < h.objects().size(); ++k) {
            const auto& o = h.objects()[k];
            ojson obj{{"index", k}, {"label", o.label}, {"box", o.box}, {"crop_ref", o.crop_ref}, {"image_url", image_url(o.crop_ref)}};
            if (o.score) obj["score"] = *o.score;
            objects.push_back(std::move(obj));
            if (!can_select) continue;
            actions.push_back(ojson{{"tool", "object_select"}, {"object_index", k}, {"label", fmt::format("box {}", k)},
                                    {"description", registry.spec("object_select").description}, {"needs_query", false}});
            if (per_box_search)
                actions.push_back(ojson{{"tool", "image_search"}, {"object_index", k},
                                        {"label", fmt::format("entities in box {}", k)},
                                        {"description", registry.spec("image_search").description},
                                        {"needs_query", false}});
        }
        ojson steps = ojson::array();
        for (const auto& e : h.trace().events)
            if (e.kind == EventKind::ToolOutput) steps.push_back(e.payload);
        return ojson{{"schema", kViewSchema},
                     {"session_id", s.id},
                     {"mode", "human"},
                     {"collection", to_string(s.constraint)},
                     {"question", question_view(s.question)},
                     {"state", h.memory().current_state()},
                     {"actions", std::move(actions)},
                     {"objects", std::move(objects)},
                     {"steps", std::move(steps)},
                     {"memory", render_context(h.memory())},
                     {"closed", h.closed()}};
    };
    auto agent_view = [](Session& s) {
        return ojson{{"schema", kViewSchema},
                     {"session_id", s.id},
                     {"mode", "agent"},
                     {"constraint", to_string(s.constraint)},
                     {"question", question_view(s.question)},
                     {"events_url", "/sessions/" + s.id + "/events"},
                     {"closed", s.done},
                     {"status", s.status}};
    };

    srv.Post("/sessions", [this, human_view, agent_view](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req);
            auto profile = string_field(body, "config_ref", false);
            if (profile.empty()) profile = "default";
            auto pit = options_.profiles.find(profile);
            if (pit == options_.profiles.end())
                throw HttpError(400, "UnknownConfig", "unknown config_ref '" + profile + "'");
            auto mode = string_field(body, "mode", false);
            if (mode.empty()) mode = "human";
            if (mode != "human" && mode != "agent") throw HttpError(400, "SchemaError", "mode must be human or agent");

            auto s = std::make_shared<Session>();
            s->profile = profile;
            s->agent = mode == "agent";
            s->question.question = text::trim(string_field(body, "question", true));
            s->question.image_ref = text::trim(string_field(body, "image_ref", true));
            if (s->question.question.empty() || s->question.image_ref.empty())
                throw HttpError(400, "SchemaError", "question and image_ref must be non-empty");
            s->question.id = string_field(body, "question_id", false);
            if (s->question.id.empty()) s->question.id = "q-" + text::hash_hex(s->question.question + "\x1f" + s->question.image_ref);
            s->constraint = s->agent ? pit->second.options.mode : options_.human_collection;
            if (auto c = string_field(body, "constraint", false); !c.empty()) {
                auto m = parse_mode(c);
                if (!m) throw HttpError(400, "SchemaError", "unknown constraint '" + c + "'");
                s->constraint = *m;
            }
            const auto& ws = pit->second;
            if (!ws.registry || ws.registry->empty()) throw HttpError(503, "ToolUnavailable", "no tool backends configured");
            auto config = ws.config();
            config.mode = s->constraint;
            config.clock = system_clock();
            config.session_id = default_session_id(s->question, mode, fmt::format("{}-{}", profile, counter_++));
            s->id = config.session_id;

            ojson view;
            if (s->agent) {
                s->runner = std::make_unique<AgentSession>(std::move(config), s->question);
                view = agent_view(*s);
            } else {
                s->human = std::make_unique<HumanSession>(std::move(config), s->question);
                view = human_view(*s);
            }
            {
                std::lock_guard lock(mutex_);
                sessions_[s->id] = s;
                if (s->agent) workers_.emplace_back([this, s] { run_agent(s); });
            }
            send_json(res, ojson{{"session_id", s->id}, {"initial_view", std::move(view)}}, 201);
        });
    });

    srv.Get(R"(/sessions/([^/]+))", [this, human_view, agent_view](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1]);
            std::lock_guard lock(s->mutex);
            send_json(res, s->agent ? agent_view(*s) : human_view(*s));
        });
    });

    srv.Post(R"(/sessions/([^/]+)/action)", [this, human_view](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1]);
            auto body = parse_body(req);
            std::lock_guard lock(s->mutex);
            if (s->agent) throw HttpError(400, "PreconditionError", "agent sessions take no external actions");
            if (s->human->closed()) throw HttpError(409, "PreconditionError", "session is closed");
            auto tool = string_field(body, "tool", true);
            auto query = string_field(body, "query", false);
            std::optional<std::size_t> index;
            if (body.contains("object_index") && !body.at("object_index").is_null()) {
                if (!body.at("object_index").is_number_unsigned())
                    throw HttpError(400, "SchemaError", "object_index must be a non-negative integer");
                index = body.at("object_index").get<std::size_t>();
            }
            ojson outputs = ojson::array();
            if (index && tool != "object_select") {
                outputs.push_back(output_view(s->human->act("object_select", "", index)));
                index.reset();
            }
            outputs.push_back(output_view(s->human->act(tool, query, index)));
            send_json(res, ojson{{"schema", kViewSchema}, {"session_id", s->id}, {"outputs", std::move(outputs)},
                                 {"view", human_view(*s)}});
        });
    });

    srv.Post(R"(/sessions/([^/]+)/finish)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1]);
            auto body = parse_body(req);
            std::lock_guard lock(s->mutex);
            if (s->agent) throw HttpError(400, "PreconditionError", "agent sessions finish on their own");
            if (s->human->closed()) throw HttpError(409, "PreconditionError", "session is already closed");
            auto status = string_field(body, "status", true);
            if (status != "success" && status != "failure")
                throw HttpError(400, "SchemaError", "status must be success or failure");
            std::optional<std::string> answer;
            if (auto a = text::trim(string_field(body, "answer", false)); !a.empty()) answer = a;
            if (status == "success" && !answer) throw HttpError(400, "PreconditionError", "a successful finish needs an answer");
            s->human->finish(status == "success", answer);
            store_.save(s->human->trace());

            ojson next = nullptr;
            const auto& list = options_.playlist;
            auto it = std::find_if(list.begin(), list.end(), [&](const VisualQuestion& q) { return q.id == s->question.id; });
            if (it != list.end() && std::next(it) != list.end())
                next = question_view(*std::next(it));
            else if (it == list.end() && !list.empty())
                next = question_view(list.front());
            send_json(res, ojson{{"trace_ref", {{"session_id", s->id}, {"url", "/traces/" + s->id}}},
                                 {"outcome", status},
                                 {"next_question", std::move(next)}});
        });
    });

    srv.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = find(req.matches[1]);
            const bool has_after = req.has_param("after");
            const auto after = size_param(req, "after", 0);
            const auto wait = std::chrono::milliseconds(std::min<std::size_t>(size_param(req, "wait_ms", 0), 30000));
            auto fresh = [&](const std::vector<TraceEvent>& all) {
                ojson out = ojson::array();
                for (const auto& e : all)
                    if (!has_after || e.seq > after) out.push_back(event_to_json(e));
                return out;
            };
            std::unique_lock lock(s->mutex);
            if (!s->agent) {
                send_json(res, ojson{{"session_id", s->id}, {"events", fresh(s->human->trace().events)},
                                     {"done", s->human->closed()}});
                return;
            }
            if (wait.count() > 0)
                s->cv.wait_for(lock, wait, [&] { return s->done || fresh(s->events).size() > 0; });
            ojson doc{{"session_id", s->id}, {"events", fresh(s->events)}, {"done", s->done}, {"status", s->status}};
            doc["answer"] = s->answer ? ojson(*s->answer) : ojson(nullptr);
            send_json(res, doc);
        });
    });

    srv.Get("/playlist", [this](const httplib::Request&, httplib::Response& res) {
        ojson list = ojson::array();
        for (const auto& q : options_.playlist) list.push_back(question_view(q));
        send_json(res, ojson{{"questions", std::move(list)}});
    });

    srv.Get("/traces", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto filter = mode_filter(req);
            ojson list = ojson::array();
            for (const auto& e : store_.list()) {
                if (filter && e.mode != *filter) continue;
                list.push_back(ojson{{"session_id", e.session_id}, {"question_id", e.question_id},
                                     {"mode", to_string(e.mode)}, {"outcome", to_string(e.outcome)},
                                     {"url", "/traces/" + e.session_id}});
            }
            send_json(res, ojson{{"traces", std::move(list)}});
        });
    });

    srv.Get(R"(/traces/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto trace = store_.load(req.matches[1].str());
            if (!trace) throw HttpError(404, "NotFound", "unknown trace '" + req.matches[1].str() + "'");
            res.set_content(serialize_trace(*trace), "application/x-ndjson");
        });
    });

    srv.Get(R"(/analytics/([a-z\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto kind = req.matches[1].str();
            auto filter = mode_filter(req);
            std::vector<RunTrace> traces;
            for (auto& t : store_.load_all())
                if (!filter || t.mode == *filter) traces.push_back(std::move(t));
            std::string csv;
            if (kind == "induced-graph") {
                csv = induced_graph_csv(induce_graph(traces));
            } else if (kind == "frequencies") {
                std::optional<std::size_t> position;
                if (req.has_param("position")) position = size_param(req, "position", 0);
                if (position && *position == 0) throw HttpError(400, "SchemaError", "position is 1-based");
                csv = tool_frequency_csv(tool_frequency(traces, position));
            } else if (kind == "lengths") {
                csv = length_distribution_csv(length_distribution(traces));
            } else if (kind == "verdicts") {
                csv = verdict_frequency_csv(verdict_frequency(traces));
            } else {
                throw HttpError(404, "NotFound", "unknown analytics table '" + kind + "'");
            }
            res.set_content(csv, "text/csv");
        });
    });
}

} // namespace vista
