#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "hitl/session.hpp"

namespace hitl {

/// JSON body of one iteration as served to clients.
inline nlohmann::json iteration_json(const IterationPayload& p) {
    nlohmann::json j{{"schema_version", kSchemaVersion},
                     {"session_id", p.session_id},
                     {"iteration", p.record},
                     {"original_obj", p.original_obj}};
    auto variants = nlohmann::json::array();
    for (std::size_t i = 0; i < p.variant_obj.size(); ++i) variants.push_back({{"index", i}, {"obj", p.variant_obj[i]}});
    j["meshes"] = variants;
    return j;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                       std::optional<std::size_t> line = {}) {
    nlohmann::json err{{"code", code}, {"message", message}};
    if (line) err["line"] = *line;
    send_json(res, status, {{"schema_version", kSchemaVersion}, {"error", err}});
}

inline int status_of(ServiceError::Kind k) {
    switch (k) {
    case ServiceError::Kind::bad_request: return 400;
    case ServiceError::Kind::not_found: return 404;
    case ServiceError::Kind::conflict: return 409;
    case ServiceError::Kind::not_ready: return 503;
    case ServiceError::Kind::too_large: return 413;
    }
    return 500;
}

inline std::string_view code_of(ServiceError::Kind k) {
    switch (k) {
    case ServiceError::Kind::bad_request: return "bad_request";
    case ServiceError::Kind::not_found: return "not_found";
    case ServiceError::Kind::conflict: return "conflict";
    case ServiceError::Kind::not_ready: return "not_ready";
    case ServiceError::Kind::too_large: return "too_large";
    }
    return "internal";
}

// Runs a handler and maps library errors onto HTTP responses.
template <class Handler>
void guarded(httplib::Response& res, Handler&& handler) {
    try {
        handler();
    } catch (const ServiceError& e) {
        if (e.kind() == ServiceError::Kind::not_ready) res.set_header("Retry-After", "1");
        send_error(res, status_of(e.kind()), code_of(e.kind()), e.what());
    } catch (const ParseError& e) {
        send_error(res, 400, "parse_error", e.what(), e.line());
    } catch (const MeshError& e) {
        send_error(res, 400, "invalid_mesh", e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const SchemaError& e) {
        send_error(res, 400, "schema_error", e.what());
    } catch (const std::invalid_argument& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const std::out_of_range& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
    auto j = nlohmann::json::parse(req.body.empty() ? std::string("{}") : req.body);
    if (!j.is_object()) throw ServiceError(ServiceError::Kind::bad_request, "body must be a JSON object");
    if (j.contains("schema_version") && j.at("schema_version") != kSchemaVersion)
        throw ServiceError(ServiceError::Kind::bad_request, "unsupported schema_version");
    return j;
}

inline std::size_t parse_index(const std::string& s) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || s.empty()) throw ServiceError(ServiceError::Kind::not_found, "bad iteration index '" + s + "'");
    return static_cast<std::size_t>(v);
}

} // namespace detail

/// HTTP front end of a SessionStore:
///   POST /sessions                      OBJ upload (multipart "mesh" + optional "config", or raw body)
///   GET  /sessions/:id
///   GET  /sessions/:id/iterations/:k    503 + Retry-After while computing
///   POST /sessions/:id/ratings          {"iteration": k, "ratings": [..]}
///   POST /sessions/:id/terminate        {"reason": "satisfied"|"reset", "ratings"?: [..]}
///   GET  /export[?state=terminated]     JSON lines
class Server {
public:
    explicit Server(SessionStore& store) : store_(store) {
        http_.set_payload_max_length(store_.config().max_upload_bytes + (1u << 20));
        routes();
    }

    httplib::Server& http() { return http_; }

    bool listen(const std::string& host, int port) { return http_.listen(host, port); }
    int bind_any(const std::string& host = "127.0.0.1") { return http_.bind_to_any_port(host); }
    bool listen_after_bind() { return http_.listen_after_bind(); }
    void wait_until_ready() const { http_.wait_until_ready(); }
    void stop() { http_.stop(); }

private:
    void routes() {
        using httplib::Request;
        using httplib::Response;

        http_.Post("/sessions", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                std::string obj;
                SessionConfig cfg;
                if (req.is_multipart_form_data()) {
                    if (!req.has_file("mesh"))
                        throw ServiceError(ServiceError::Kind::bad_request, "multipart upload needs a 'mesh' part");
                    obj = req.get_file_value("mesh").content;
                    if (req.has_file("config"))
                        cfg = session_config_from_json(nlohmann::json::parse(req.get_file_value("config").content));
                } else {
                    obj = req.body;
                    if (req.has_param("seed")) cfg.seed = std::stoull(req.get_param_value("seed"));
                    if (req.has_param("context")) cfg.context = req.get_param_value("context");
                }
                detail::send_json(res, 201, store_.create_session(obj, cfg));
            });
        });

        http_.Get("/sessions/:id", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] { detail::send_json(res, 200, store_.get_session(req.path_params.at("id"))); });
        });

        http_.Get("/sessions/:id/iterations/:k", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                const auto k = detail::parse_index(req.path_params.at("k"));
                detail::send_json(res, 200, iteration_json(store_.get_iteration(req.path_params.at("id"), k)));
            });
        });

        http_.Post("/sessions/:id/ratings", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                const auto body = detail::parse_body(req);
                if (!body.contains("ratings")) throw ServiceError(ServiceError::Kind::bad_request, "missing 'ratings'");
                std::optional<std::size_t> iteration;
                if (body.contains("iteration")) iteration = body.at("iteration").get<std::size_t>();
                const auto ratings = body.at("ratings").get<std::vector<int>>();
                detail::send_json(res, 200, store_.submit_ratings(req.path_params.at("id"), iteration, ratings));
            });
        });

        http_.Post("/sessions/:id/terminate", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                const auto body = detail::parse_body(req);
                const auto reason = body.value("reason", std::string());
                SessionState state;
                if (reason == "satisfied") state = SessionState::terminated_satisfied;
                else if (reason == "reset") state = SessionState::terminated_reset;
                else throw ServiceError(ServiceError::Kind::bad_request, "reason must be 'satisfied' or 'reset'");
                std::optional<std::vector<int>> ratings;
                if (body.contains("ratings")) ratings = body.at("ratings").get<std::vector<int>>();
                detail::send_json(res, 200, store_.terminate(req.path_params.at("id"), state, ratings));
            });
        });

        http_.Get("/export", [this](const Request& req, Response& res) {
            detail::guarded(res, [&] {
                const bool terminated_only = req.has_param("state") && req.get_param_value("state") == "terminated";
                std::string out;
                for (const auto& s : store_.export_sequences(terminated_only)) out += to_jsonl_line(s);
                res.status = 200;
                res.set_content(out, "application/x-ndjson");
            });
        });
    }

    SessionStore& store_;
    httplib::Server http_;
};

} // namespace hitl
