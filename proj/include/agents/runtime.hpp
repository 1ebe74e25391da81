#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agents/agent.hpp"
#include "agents/config.hpp"
#include "agents/environment.hpp"
#include "agents/events.hpp"
#include "agents/llm.hpp"
#include "agents/sop.hpp"
#include "agents/tools.hpp"

namespace agents {

enum class SessionStatus { running, waiting_for_human, finished, failed };
std::string to_string(SessionStatus s);

enum class SubmitResult { accepted, stale_request, not_waiting, empty_content };
std::string to_string(SubmitResult r);

struct SopPatch {
  std::vector<std::pair<std::string, StateSpec>> states;
  std::vector<std::pair<std::string, std::string>> edges;

  bool empty() const { return states.empty() && edges.empty(); }
};

inline constexpr const char* kSopPatchTag = "sop-patch";

// Reads a ```sop-patch fenced block of the form
// {"states": {name: StateSpec}, "edges": [[from, to], ...]}.
// No block gives an empty patch; a malformed one also warns.
SopPatch parse_new_states(const Action& action, const EventSink& sink);

struct SessionOptions {
  // When set, files go to <output_dir>/sessions/<id>/events.ndjson,
  // traces/<id>.ndjson, transcripts/<id>.md and memory/<id>/<agent>.ndjson.
  std::string output_dir;
  std::string session_id;
  std::optional<int> max_steps;
  GatewayOptions gateway;
  // Use this gateway (and its mock cursor) instead of building one.
  Gateway* shared_gateway = nullptr;
  std::deque<std::string> human_inputs;
  std::optional<std::chrono::milliseconds> human_timeout;
  // Called (without locks held) each time the session starts waiting.
  std::function<void(const HumanInputRequest&)> on_human_request;
};

std::string new_session_id();

class Session : public HumanChannel {
 public:
  Session(SystemConfig config, const ToolRegistry& tools, SessionOptions options = {});
  ~Session() override;

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const SystemConfig& config() const { return config_; }
  SessionStatus status() const;
  const EventLog& events() const { return *log_; }
  EventLog& events() { return *log_; }
  const Environment& environment() const { return environment_; }
  const Sop& sop() const { return sop_; }
  const std::map<std::string, Agent>& agents() const { return agents_; }
  Gateway& gateway() { return *gateway_; }
  const Gateway& gateway() const { return *gateway_; }
  int seed() const { return seed_; }
  std::optional<HumanInputRequest> pending_request() const;

  // Runs the loop to completion on the calling thread. Never throws for
  // session-level failures; they end in SessionFailed.
  SessionStatus run();

  SubmitResult submit_human_input(const std::string& request_id, const std::string& content);

  // Ends a pending human wait; the session fails with the given reason.
  void cancel(const std::string& reason = "cancelled");

  std::string transcript() const;
  std::string session_dir() const;
  std::string events_path() const;
  std::string transcript_path() const;

  std::string request_input(const std::string& agent, const std::string& state, const Observation& obs) override;

 private:
  void emit(EventKind kind, nlohmann::json payload);
  void finish(EventKind kind, nlohmann::json payload, SessionStatus status);
  void write_transcript() const;

  SystemConfig config_;
  const ToolRegistry& tools_;
  SessionOptions options_;
  std::string id_;
  int seed_ = 0;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<Gateway> owned_gateway_;
  Gateway* gateway_ = nullptr;
  std::map<std::string, Agent> agents_;
  Sop sop_;
  Environment environment_;
  EventSink sink_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  SessionStatus status_ = SessionStatus::running;
  std::optional<HumanInputRequest> pending_;
  std::optional<std::string> delivered_;
  std::optional<std::string> cancelled_;
  bool started_ = false;
};

// Builds a session with the given options and runs it to completion.
std::unique_ptr<Session> run_session(const SystemConfig& config, const ToolRegistry& tools, SessionOptions options = {});

}  // namespace agents
