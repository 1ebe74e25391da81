#include "agents/service.hpp"

#include <sys/socket.h>

#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "agents/error.hpp"
#include "agents/util.hpp"

namespace agents {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, const ApiError& e) { send(res, e.status, to_json(e)); }

bool scripted(const GatewayOptions& g) { return g.mock_override.has_value(); }

// Drops the missing-script error when the service supplies its own script.
ValidationReport effective_report(ValidationReport report, const GatewayOptions& g) {
  if (!scripted(g)) return report;
  std::erase_if(report.errors, [](const ValidationIssue& e) { return e.code == "MOCK_SCRIPT_MISSING"; });
  report.ok = report.errors.empty();
  return report;
}

bool is_syntax_error(const ValidationReport& r) {
  return !r.errors.empty() && r.errors.front().code == "SYNTAX_ERROR";
}

std::string sse_frame(const SessionEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: session\ndata: " +
         to_json(e).dump(-1, ' ', false, json::error_handler_t::replace) + "\n\n";
}

}  // namespace

json to_json(const ApiError& e) { return {{"code", e.code}, {"message", e.message}, {"status", e.status}}; }

ServiceOptions ServiceOptions::from_env() {
  ServiceOptions o;
  if (const char* v = std::getenv("AGENTS_SESSIONS_DIR")) o.data_dir = v;
  o.tools = ToolOptions::from_env();
  return o;
}

Service::Service(ServiceOptions options)
    : options_(std::move(options)), tools_(builtin_tools(options_.tools)), server_(std::make_unique<httplib::Server>()) {
  port_ = options_.port;
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
}

Service::~Service() { stop(); }

bool Service::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
    bound_ = port_ > 0;
  } else {
    bound_ = server_->bind_to_port(options_.host, options_.port);
  }
  return bound_;
}

void Service::listen() {
  listened_ = true;
  server_->listen_after_bind();
}

bool Service::start() {
  if (!bind()) return false;
  listener_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
  return true;
}

void Service::stop() {
  if (stopping_.exchange(true)) return;
  // httplib only closes the socket of a running server
  if (bound_ && !listened_.exchange(true)) {
    listener_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }
  server_->stop();
  if (listener_.joinable()) listener_.join();
  std::map<std::string, std::unique_ptr<Entry>> entries;
  {
    std::lock_guard lock(mu_);
    entries.swap(sessions_);
  }
  for (auto& [_, e] : entries) e->session->cancel("service_stopped");
  for (auto& [_, e] : entries) {
    if (e->worker.joinable()) e->worker.join();
  }
}

std::shared_ptr<Session> Service::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second->session;
}

size_t Service::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

json Service::handle_of(const Entry& e) const {
  const Session& s = *e.session;
  json out = {{"session_id", s.id()},
              {"status", to_string(s.status())},
              {"created_at", e.created_at},
              {"config_digest", e.config_digest},
              {"last_seq", s.events().last_seq()}};
  if (auto req = s.pending_request()) {
    out["pending_request"] = {{"request_id", req->request_id},
                              {"agent", req->agent},
                              {"state", req->state},
                              {"observation", render_observation(req->observation)}};
  }
  return out;
}

void Service::routes() {
  httplib::Server& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/v1/validate", [this](const httplib::Request& req, httplib::Response& res) {
    ValidationReport report = effective_report(validate_document(req.body, &tools_), options_.gateway);
    if (is_syntax_error(report)) return send_error(res, {"SYNTAX_ERROR", report.errors.front().message, 400});
    send(res, 200, to_json(report));
  });

  srv.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    ValidationReport report = effective_report(validate_document(req.body, &tools_), options_.gateway);
    if (is_syntax_error(report)) return send_error(res, {"SYNTAX_ERROR", report.errors.front().message, 400});
    if (!report.ok) {
      json body = to_json(report);
      json err = to_json(ApiError{"VALIDATION_FAILED", "config failed validation", 422});
      body.update(err);
      return send(res, 422, body);
    }
    try {
      SystemConfig config = config_from_json(json::parse(req.body));
      auto entry = std::make_unique<Entry>();
      std::lock_guard lock(mu_);
      if (stopping_) return send_error(res, {"SHUTTING_DOWN", "service is stopping", 500});
      SessionOptions opts;
      opts.output_dir = options_.data_dir;
      opts.gateway = options_.gateway;
      do {
        opts.session_id = new_session_id();
      } while (sessions_.contains(opts.session_id));
      entry->session = std::make_shared<Session>(config, tools_, std::move(opts));
      entry->created_at = utc_now_iso();
      entry->config_digest = sha256_hex(canonicalize(config));
      Session* s = entry->session.get();
      entry->worker = std::thread([s] { s->run(); });
      json body = handle_of(*entry);
      sessions_.emplace(s->id(), std::move(entry));
      send(res, 201, body);
    } catch (const std::exception& e) {
      send_error(res, {"INTERNAL", e.what(), 500});
    }
  });

  srv.Get("/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::lock_guard lock(mu_);
    for (const auto& [_, e] : sessions_) list.push_back(handle_of(*e));
    send(res, 200, {{"sessions", list}});
  });

  srv.Get(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(req.matches[1].str());
    if (it == sessions_.end()) return send_error(res, {"NOT_FOUND", "unknown session '" + req.matches[1].str() + "'", 404});
    send(res, 200, handle_of(*it->second));
  });

  srv.Get(R"(/v1/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1].str());
    if (!session) return send_error(res, {"NOT_FOUND", "unknown session '" + req.matches[1].str() + "'", 404});
    int from = 0;
    if (req.has_param("from_seq")) {
      try {
        from = std::stoi(req.get_param_value("from_seq"));
      } catch (const std::exception&) {
        return send_error(res, {"BAD_REQUEST", "from_seq must be an integer", 400});
      }
      if (from < 0) return send_error(res, {"BAD_REQUEST", "from_seq must be >= 0", 400});
    }
    res.set_header("Cache-Control", "no-cache");
    auto next = std::make_shared<int>(from);
    res.set_chunked_content_provider("text/event-stream", [this, session, next](size_t, httplib::DataSink& sink) {
      const EventLog& log = session->events();
      while (!stopping_) {
        log.wait_for(*next, std::chrono::milliseconds(200));
        for (const auto& e : log.read_from(*next)) {
          std::string frame = sse_frame(e);
          if (!sink.write(frame.data(), frame.size())) return false;
          *next = e.seq + 1;
        }
        if (log.closed() && *next > log.last_seq()) {
          sink.done();
          return true;
        }
        if (!sink.is_writable()) return false;
      }
      return false;
    });
  });

  srv.Post(R"(/v1/sessions/([^/]+)/input)", [this](const httplib::Request& req, httplib::Response& res) {
    auto session = find(req.matches[1].str());
    if (!session) return send_error(res, {"NOT_FOUND", "unknown session '" + req.matches[1].str() + "'", 404});
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("request_id") || !body["request_id"].is_string() ||
        !body.contains("content") || !body["content"].is_string())
      return send_error(res, {"BAD_REQUEST", "body must be {\"request_id\": string, \"content\": string}", 400});
    SubmitResult r = session->submit_human_input(body["request_id"].get<std::string>(), body["content"].get<std::string>());
    switch (r) {
      case SubmitResult::accepted: return send(res, 202, {{"status", "accepted"}});
      case SubmitResult::stale_request:
        return send_error(res, {"StaleRequest", "request_id does not match the pending request", 409});
      case SubmitResult::not_waiting:
        return send_error(res, {"NotWaiting", "session is not waiting for human input", 409});
      case SubmitResult::empty_content: return send_error(res, {"EMPTY_CONTENT", "content must not be empty", 422});
    }
  });

  srv.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object())
      return send_error(res, {"BAD_REQUEST", "body must be {\"task\": string}", 400});
    std::string task = body.value("task", std::string());
    if (task.find_first_not_of(" \t\r\n") == std::string::npos)
      return send_error(res, {"EMPTY_TASK", "task must not be empty", 422});
    try {
      GatewayOptions g = options_.gateway;
      g.mock_override = options_.meta_mock;
      g.trace_path.clear();
      Gateway gateway(g);
      ExemplarLibrary lib = build_library(options_.exemplar_files, gateway, options_.meta_profile, &tools_);
      GenerationResult out = generate_config(task, lib, gateway, options_.meta_profile, &tools_);
      send(res, 200, {{"config", to_json(out.config)}, {"trace", to_json(out.trace)}});
    } catch (const GenerationFailed& e) {
      json err = to_json(ApiError{"GENERATION_FAILED", e.what(), 500});
      const auto& t = e.trace();
      json errors = json::array();
      for (const auto& i : t.last_errors) errors.push_back({{"path", i.path}, {"code", i.code}, {"message", i.message}});
      err["trace"] = {{"validation_attempts", t.validation_attempts},
                      {"digest", sha256_hex(to_json(t).dump())},
                      {"last_errors", errors}};
      send(res, 500, err);
    } catch (const std::exception& e) {
      send_error(res, {"INTERNAL", e.what(), 500});
    }
  });
}

}  // namespace agents
