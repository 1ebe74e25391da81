#pragma once

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace agents {

enum class EventKind {
  SessionStarted,
  StateEntered,
  AgentSelected,
  HumanInputRequested,
  HumanInputReceived,
  ActionEmitted,
  ToolInvoked,
  TransitDecided,
  MemoryUpdated,
  Warning,
  SessionFinished,
  SessionFailed,
};

std::string to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(std::string_view s);

struct SessionEvent {
  int seq = 0;
  EventKind kind = EventKind::Warning;
  nlohmann::json payload = nlohmann::json::object();
  std::string timestamp;
};

nlohmann::json to_json(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::json& doc);
// The event without its timestamp; the form used for determinism checks.
nlohmann::json comparable(const SessionEvent& e);

using EventSink = std::function<void(EventKind, nlohmann::json)>;

inline EventSink null_sink() {
  return [](EventKind, nlohmann::json) {};
}

inline void warn(const EventSink& sink, const std::string& code, const std::string& message,
                 nlohmann::json extra = nlohmann::json::object()) {
  extra["code"] = code;
  extra["message"] = message;
  sink(EventKind::Warning, std::move(extra));
}

// Append-only session event log. Appends assign dense seq numbers; readers
// on other threads can wait for new events. Closed after a terminal event.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::string& path);

  const SessionEvent& append(EventKind kind, nlohmann::json payload);

  std::vector<SessionEvent> read_from(int from_seq) const;
  std::vector<SessionEvent> all() const { return read_from(0); }
  size_t size() const;
  int last_seq() const;
  bool closed() const;

  // Blocks until an event with seq >= from_seq exists, the log closes, or the
  // timeout expires. Returns true when such an event exists.
  bool wait_for(int from_seq, std::chrono::milliseconds timeout) const;

  EventSink sink();

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<SessionEvent> events_;
  bool closed_ = false;
  std::ofstream file_;
};

std::vector<SessionEvent> load_event_log(const std::string& path);

}  // namespace agents
