#include "agents/events.hpp"

#include <array>
#include <filesystem>
#include <sstream>

#include "agents/error.hpp"
#include "agents/util.hpp"

namespace agents {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 12> kKindNames = {{
    {EventKind::SessionStarted, "SessionStarted"},
    {EventKind::StateEntered, "StateEntered"},
    {EventKind::AgentSelected, "AgentSelected"},
    {EventKind::HumanInputRequested, "HumanInputRequested"},
    {EventKind::HumanInputReceived, "HumanInputReceived"},
    {EventKind::ActionEmitted, "ActionEmitted"},
    {EventKind::ToolInvoked, "ToolInvoked"},
    {EventKind::TransitDecided, "TransitDecided"},
    {EventKind::MemoryUpdated, "MemoryUpdated"},
    {EventKind::Warning, "Warning"},
    {EventKind::SessionFinished, "SessionFinished"},
    {EventKind::SessionFailed, "SessionFailed"},
}};

bool is_terminal(EventKind k) { return k == EventKind::SessionFinished || k == EventKind::SessionFailed; }

}  // namespace

std::string to_string(EventKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return std::string(name);
  }
  return "Unknown";
}

std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

json to_json(const SessionEvent& e) {
  return {{"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload}, {"timestamp", e.timestamp}};
}

json comparable(const SessionEvent& e) {
  return {{"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

SessionEvent event_from_json(const json& doc) {
  SessionEvent e;
  e.seq = doc.at("seq").get<int>();
  auto kind = event_kind_from_string(doc.at("kind").get<std::string>());
  if (!kind) throw Error("unknown event kind '" + doc.at("kind").get<std::string>() + "'");
  e.kind = *kind;
  e.payload = doc.value("payload", json::object());
  e.timestamp = doc.value("timestamp", std::string());
  return e;
}

EventLog::EventLog(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  file_.open(p, std::ios::trunc);
  if (!file_) throw Error("cannot open event log '" + path + "'");
}

const SessionEvent& EventLog::append(EventKind kind, json payload) {
  std::lock_guard lock(mu_);
  if (closed_) throw Error("event log is closed; cannot append " + to_string(kind));
  if (events_.empty() != (kind == EventKind::SessionStarted))
    throw Error("SessionStarted must be the first event, and only the first");
  SessionEvent e{static_cast<int>(events_.size()), kind, std::move(payload), utc_now_iso()};
  if (file_.is_open()) {
    file_ << to_json(e).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    file_.flush();
  }
  events_.push_back(std::move(e));
  if (is_terminal(kind)) closed_ = true;
  cv_.notify_all();
  return events_.back();
}

std::vector<SessionEvent> EventLog::read_from(int from_seq) const {
  std::lock_guard lock(mu_);
  if (from_seq < 0) from_seq = 0;
  if (static_cast<size_t>(from_seq) >= events_.size()) return {};
  return {events_.begin() + from_seq, events_.end()};
}

size_t EventLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

int EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return static_cast<int>(events_.size()) - 1;
}

bool EventLog::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

bool EventLog::wait_for(int from_seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return static_cast<int>(events_.size()) > from_seq || closed_; });
  return static_cast<int>(events_.size()) > from_seq;
}

EventSink EventLog::sink() {
  return [this](EventKind kind, json payload) { append(kind, std::move(payload)); };
}

std::vector<SessionEvent> load_event_log(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<SessionEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(event_from_json(json::parse(line)));
  }
  return out;
}

}  // namespace agents
