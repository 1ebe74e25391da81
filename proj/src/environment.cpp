#include "agents/environment.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "agents/error.hpp"

namespace agents {

using nlohmann::json;

json to_json(const Action& a) {
  json calls = json::array();
  for (const auto& c : a.tool_calls)
    calls.push_back({{"tool_name", c.tool_name}, {"params", c.params}, {"ok", c.ok}, {"result_digest", c.result_digest}});
  return {{"turn_index", a.turn_index}, {"agent", a.agent},       {"state", a.state},
          {"content", a.content},       {"tool_calls", calls},    {"is_human_supplied", a.is_human_supplied}};
}

Action action_from_json(const json& doc) {
  Action a;
  a.turn_index = doc.at("turn_index").get<int>();
  a.agent = doc.at("agent").get<std::string>();
  a.state = doc.at("state").get<std::string>();
  a.content = doc.at("content").get<std::string>();
  a.is_human_supplied = doc.value("is_human_supplied", false);
  for (const auto& c : doc.value("tool_calls", json::array()))
    a.tool_calls.push_back({c.at("tool_name").get<std::string>(), c.value("params", json::object()), c.value("ok", true),
                            c.value("result_digest", std::string())});
  return a;
}

std::string render_action_line(const Action& a) {
  std::string line = "[turn " + std::to_string(a.turn_index) + "] " + a.agent + " @ " + a.state + ": " + a.content;
  for (const auto& c : a.tool_calls) line += "\n  (tool " + c.tool_name + (c.ok ? "" : ", failed") + ": " + c.result_digest + ")";
  return line;
}

std::string render_observation(const Observation& obs) {
  std::ostringstream out;
  out << "## Current state: " << obs.current_state_name << "\n";
  if (!obs.scratchpad_text.empty()) out << "\n## Working memory\n" << obs.scratchpad_text << "\n";
  if (!obs.retrieved_memories.empty()) {
    out << "\n## Relevant memories\n";
    for (const auto& [content, sim] : obs.retrieved_memories)
      out << "- (similarity " << std::fixed << std::setprecision(4) << sim << ") " << content << "\n";
  }
  out << "\n## Recent actions\n";
  if (obs.recent_actions.empty()) out << "(none yet)\n";
  for (const auto& a : obs.recent_actions) out << render_action_line(a) << "\n";
  return out.str();
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)) {
  if (spec_.window < 1) throw InvalidArgument("environment window must be >= 1");
}

bool Environment::visible(const std::string& agent, const Action& action) const {
  auto it = spec_.visibility.find(agent);
  if (it == spec_.visibility.end()) return true;
  return std::find(it->second.begin(), it->second.end(), action.state) != it->second.end();
}

std::vector<Action> Environment::visible_to(const std::string& agent) const {
  std::vector<Action> out;
  for (const auto& a : history_) {
    if (visible(agent, a)) out.push_back(a);
  }
  return out;
}

Observation Environment::observed(const std::string& agent, const std::string& state, const std::string& fallback_query,
                                  const MemoryHandles& memory, Gateway& gateway, const EventSink& sink) const {
  Observation obs;
  obs.current_state_name = state;
  std::vector<Action> seen = visible_to(agent);
  size_t w = static_cast<size_t>(spec_.window);
  size_t start = seen.size() > w ? seen.size() - w : 0;
  obs.recent_actions.assign(seen.begin() + static_cast<std::ptrdiff_t>(start), seen.end());

  if (memory.scratchpad) obs.scratchpad_text = memory.scratchpad->text;
  if (memory.long_term && memory.long_term->size() > 0) {
    std::string query;
    size_t from = seen.size() > 3 ? seen.size() - 3 : 0;
    for (size_t i = from; i < seen.size(); ++i) {
      if (!query.empty()) query += "\n";
      query += seen[i].content;
    }
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) query = fallback_query;
    if (query.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        for (auto& m : retrieve(*memory.long_term, query, memory.top_k, gateway, memory.profile, agent))
          obs.retrieved_memories.emplace_back(std::move(m.record.content), m.similarity);
      } catch (const Error& e) {
        warn(sink, "MEMORY_RETRIEVAL_FAILED", e.what(), {{"agent", agent}});
      }
    }
  }
  return obs;
}

void Environment::update(Action action, const EventSink& sink) {
  if (action.turn_index != static_cast<int>(history_.size()))
    throw Error("turn index mismatch: action carries " + std::to_string(action.turn_index) + " but history has " +
                std::to_string(history_.size()) + " actions");
  history_.push_back(std::move(action));
  sink(EventKind::ActionEmitted, to_json(history_.back()));
}

std::vector<Action> actions_from_events(const std::vector<SessionEvent>& events) {
  std::vector<Action> out;
  for (const auto& e : events) {
    if (e.kind == EventKind::ActionEmitted) out.push_back(action_from_json(e.payload));
  }
  return out;
}

std::string render_transcript(const std::string& session_id, const std::vector<Action>& actions) {
  std::ostringstream out;
  out << "# Transcript " << session_id << "\n";
  for (const auto& a : actions) {
    out << "\n### turn " << a.turn_index << " \xE2\x80\x94 " << a.agent << " @ " << a.state << "\n\n";
    out << a.content << "\n";
    if (!a.tool_calls.empty()) {
      out << "\n";
      for (const auto& c : a.tool_calls)
        out << "- tool `" << c.tool_name << "` (" << (c.ok ? "ok" : "failed") << "): " << c.result_digest << "\n";
    }
  }
  return out.str();
}

}  // namespace agents
