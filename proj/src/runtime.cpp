#include "agents/runtime.hpp"

#include <filesystem>
#include <regex>

#include "agents/error.hpp"
#include "agents/util.hpp"

namespace agents {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class HumanWaitAborted : public Error {
 public:
  HumanWaitAborted(std::string reason, const std::string& message) : Error(message), reason_(std::move(reason)) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

SystemConfig with_overrides(SystemConfig config, const SessionOptions& options) {
  if (options.max_steps) {
    if (*options.max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
    config.sop.max_steps = *options.max_steps;
  }
  return config;
}

const SystemConfig& checked(const SystemConfig& config, const ToolRegistry& tools, const SessionOptions& options) {
  bool scripted = options.gateway.mock_override.has_value() || options.shared_gateway != nullptr;
  ValidationReport report = validate(config, &tools);
  for (const auto& e : report.errors) {
    // a script supplied with the session stands in for one named by the config
    if (scripted && e.code == "MOCK_SCRIPT_MISSING") continue;
    throw ConfigError(ConfigError::Kind::schema, e.code, e.path, "invalid config: " + e.path + ": " + e.message);
  }
  return config;
}

std::string pick_id(const std::string& requested) {
  if (requested.empty()) return new_session_id();
  if (!is_valid_name(requested)) throw InvalidArgument("invalid session id '" + requested + "'");
  return requested;
}

}  // namespace

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::running: return "running";
    case SessionStatus::waiting_for_human: return "waiting_for_human";
    case SessionStatus::finished: return "finished";
    case SessionStatus::failed: return "failed";
  }
  return "unknown";
}

std::string to_string(SubmitResult r) {
  switch (r) {
    case SubmitResult::accepted: return "accepted";
    case SubmitResult::stale_request: return "StaleRequest";
    case SubmitResult::not_waiting: return "NotWaiting";
    case SubmitResult::empty_content: return "EmptyContent";
  }
  return "unknown";
}

std::string new_session_id() { return "s-" + random_token(6); }

SopPatch parse_new_states(const Action& action, const EventSink& sink) {
  static const std::regex fence("```sop-patch[^\\n]*\\n([\\s\\S]*?)```");
  std::smatch m;
  if (!std::regex_search(action.content, m, fence)) return {};
  auto malformed = [&](const std::string& why) {
    warn(sink, "MALFORMED_SOP_PATCH", why, {{"agent", action.agent}, {"turn_index", action.turn_index}});
    return SopPatch{};
  };
  json doc = json::parse(m[1].str(), nullptr, false);
  if (doc.is_discarded()) return malformed("sop-patch block is not valid JSON");
  if (!doc.is_object()) return malformed("sop-patch block must be an object");
  for (const auto& [k, _] : doc.items()) {
    if (k != "states" && k != "edges") return malformed("unknown key '" + k + "' in sop-patch block");
  }
  SopPatch patch;
  try {
    if (doc.contains("states")) {
      if (!doc["states"].is_object()) return malformed("sop-patch 'states' must be an object");
      for (const auto& [name, spec] : doc["states"].items())
        patch.states.emplace_back(name, state_from_json(spec, "sop.states." + name));
    }
    if (doc.contains("edges")) {
      if (!doc["edges"].is_array()) return malformed("sop-patch 'edges' must be an array");
      for (const auto& e : doc["edges"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
          return malformed("each sop-patch edge must be a [from, to] pair of state names");
        patch.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
      }
    }
  } catch (const ConfigError& e) {
    return malformed(e.path() + ": " + e.what());
  }
  if (patch.empty()) return malformed("sop-patch block adds nothing");
  return patch;
}

Session::Session(SystemConfig config, const ToolRegistry& tools, SessionOptions options)
    : config_(with_overrides(checked(config, tools, options), options)),
      tools_(tools),
      options_(std::move(options)),
      id_(pick_id(options_.session_id)),
      seed_(0),
      agents_(agents_from_config(config_)),
      sop_(config_, &tools_),
      environment_(config_.environment) {
  if (!options_.output_dir.empty()) {
    log_ = std::make_unique<EventLog>(events_path());
    if (options_.gateway.trace_path.empty())
      options_.gateway.trace_path = (fs::path(options_.output_dir) / "traces" / (id_ + ".ndjson")).string();
    for (auto& [name, agent] : agents_) {
      if (agent.long_term())
        agent.long_term()->attach_snapshot(
            (fs::path(options_.output_dir) / "memory" / id_ / (name + ".ndjson")).string());
    }
  } else {
    log_ = std::make_unique<EventLog>();
  }
  if (!options_.human_timeout && config_.environment.human_timeout_ms)
    options_.human_timeout = std::chrono::milliseconds(*config_.environment.human_timeout_ms);
  if (options_.shared_gateway) {
    gateway_ = options_.shared_gateway;
  } else {
    owned_gateway_ = std::make_unique<Gateway>(options_.gateway);
    gateway_ = owned_gateway_.get();
  }
  sink_ = [this](EventKind kind, json payload) { emit(kind, std::move(payload)); };
}

Session::~Session() = default;

SessionStatus Session::status() const {
  std::lock_guard lock(mu_);
  return status_;
}

std::optional<HumanInputRequest> Session::pending_request() const {
  std::lock_guard lock(mu_);
  return pending_;
}

std::string Session::session_dir() const {
  if (options_.output_dir.empty()) return "";
  return (fs::path(options_.output_dir) / "sessions" / id_).string();
}

std::string Session::events_path() const {
  if (options_.output_dir.empty()) return "";
  return (fs::path(session_dir()) / "events.ndjson").string();
}

std::string Session::transcript_path() const {
  if (options_.output_dir.empty()) return "";
  return (fs::path(options_.output_dir) / "transcripts" / (id_ + ".md")).string();
}

void Session::emit(EventKind kind, json payload) { log_->append(kind, std::move(payload)); }

void Session::finish(EventKind kind, json payload, SessionStatus status) {
  emit(kind, std::move(payload));
  {
    std::lock_guard lock(mu_);
    status_ = status;
    pending_.reset();
  }
  cv_.notify_all();
  write_transcript();
}

std::string Session::transcript() const { return render_transcript(id_, environment_.history()); }

void Session::write_transcript() const {
  if (options_.output_dir.empty()) return;
  try {
    write_file(transcript_path(), transcript());
  } catch (const std::exception&) {
    // the event log still holds every action
  }
}

SessionStatus Session::run() {
  {
    std::lock_guard lock(mu_);
    if (started_) throw Error("session '" + id_ + "' has already run");
    started_ = true;
  }
  try {
    json agent_names = json::array();
    for (const auto& [name, _] : agents_) agent_names.push_back(name);
    emit(EventKind::SessionStarted, {{"initial_state", config_.sop.initial_state},
                                     {"agents", agent_names},
                                     {"config_digest", sha256_hex(canonicalize(config_))},
                                     {"max_steps", config_.sop.max_steps}});
    emit(EventKind::StateEntered, {{"state", config_.sop.initial_state}, {"from", nullptr}});

    ControllerEnv ctl{*gateway_, config_.llm, sink_};
    while (true) {
      NextResult n = sop_.next(environment_, ctl);
      if (n.finished) break;
      Agent& agent = agents_.at(n.agent);
      TurnContext ctx{*gateway_, tools_, sink_, this, static_cast<int>(environment_.history().size())};
      Action action = agent.step(*n.state, environment_, ctx);
      environment_.update(std::move(action), sink_);

      if (config_.sop.dynamic_planning) {
        SopPatch patch = parse_new_states(environment_.history().back(), sink_);
        if (!patch.empty()) {
          try {
            sop_.add_states(patch.states, patch.edges);
          } catch (const SopPatchError& e) {
            warn(sink_, e.code(), e.what(), {{"turn_index", environment_.history().back().turn_index}});
          }
        }
      }
    }
    finish(EventKind::SessionFinished,
           {{"reason", sop_.finish_reason()},
            {"steps", sop_.step_count()},
            {"actions", environment_.history().size()}},
           SessionStatus::finished);
  } catch (const HumanWaitAborted& e) {
    finish(EventKind::SessionFailed, {{"reason", e.reason()}, {"message", e.what()}}, SessionStatus::failed);
  } catch (const std::exception& e) {
    finish(EventKind::SessionFailed, {{"reason", "error"}, {"message", e.what()}}, SessionStatus::failed);
  }
  return status();
}

std::string Session::request_input(const std::string& agent, const std::string& state, const Observation& obs) {
  HumanInputRequest req{id_, agent, state, obs, "req-" + std::to_string(environment_.history().size())};
  emit(EventKind::HumanInputRequested, {{"agent", agent}, {"state", state}, {"request_id", req.request_id}});

  std::unique_lock lock(mu_);
  if (!options_.human_inputs.empty()) {
    std::string content = std::move(options_.human_inputs.front());
    options_.human_inputs.pop_front();
    lock.unlock();
    emit(EventKind::HumanInputReceived, {{"agent", agent}, {"request_id", req.request_id}});
    return content;
  }
  if (cancelled_) throw HumanWaitAborted(*cancelled_, "session cancelled while waiting for human input");
  pending_ = req;
  delivered_.reset();
  status_ = SessionStatus::waiting_for_human;
  lock.unlock();
  if (options_.on_human_request) options_.on_human_request(req);
  lock.lock();

  auto ready = [&] { return delivered_.has_value() || cancelled_.has_value(); };
  if (options_.human_timeout) {
    if (!cv_.wait_for(lock, *options_.human_timeout, ready)) {
      pending_.reset();
      status_ = SessionStatus::running;
      throw HumanWaitAborted("human_timeout", "no human input for request " + req.request_id + " within " +
                                                  std::to_string(options_.human_timeout->count()) + " ms");
    }
  } else {
    cv_.wait(lock, ready);
  }
  if (cancelled_ && !delivered_) {
    pending_.reset();
    status_ = SessionStatus::running;
    throw HumanWaitAborted(*cancelled_, "session cancelled while waiting for human input");
  }
  std::string content = std::move(*delivered_);
  delivered_.reset();
  return content;
}

SubmitResult Session::submit_human_input(const std::string& request_id, const std::string& content) {
  {
    std::lock_guard lock(mu_);
    if (status_ != SessionStatus::waiting_for_human || !pending_) return SubmitResult::not_waiting;
    if (pending_->request_id != request_id) return SubmitResult::stale_request;
    if (content.find_first_not_of(" \t\r\n") == std::string::npos) return SubmitResult::empty_content;
    // logged before the loop can wake, so the event precedes the action
    log_->append(EventKind::HumanInputReceived, {{"agent", pending_->agent}, {"request_id", request_id}});
    delivered_ = content;
    pending_.reset();
    status_ = SessionStatus::running;
  }
  cv_.notify_all();
  return SubmitResult::accepted;
}

void Session::cancel(const std::string& reason) {
  {
    std::lock_guard lock(mu_);
    if (!cancelled_) cancelled_ = reason;
  }
  cv_.notify_all();
}

std::unique_ptr<Session> run_session(const SystemConfig& config, const ToolRegistry& tools, SessionOptions options) {
  auto session = std::make_unique<Session>(config, tools, std::move(options));
  session->run();
  return session;
}

}  // namespace agents
