#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "agents/config.hpp"
#include "agents/events.hpp"
#include "agents/llm.hpp"
#include "agents/memory.hpp"

namespace agents {

struct ToolCallRecord {
  std::string tool_name;
  nlohmann::json params = nlohmann::json::object();
  bool ok = true;
  std::string result_digest;

  bool operator==(const ToolCallRecord&) const = default;
};

struct Action {
  int turn_index = 0;
  std::string agent;
  std::string state;
  std::string content;
  std::vector<ToolCallRecord> tool_calls;
  bool is_human_supplied = false;
  std::string timestamp;
};

// Timestamp excluded: this is the ActionEmitted payload.
nlohmann::json to_json(const Action& a);
Action action_from_json(const nlohmann::json& doc);

struct Observation {
  std::vector<Action> recent_actions;
  std::vector<std::pair<std::string, double>> retrieved_memories;
  std::string scratchpad_text;
  std::string current_state_name;
};

// Prompt-ready rendering; also what a human participant is shown.
std::string render_observation(const Observation& obs);
std::string render_action_line(const Action& a);

struct MemoryHandles {
  const LongTermStore* long_term = nullptr;
  const Scratchpad* scratchpad = nullptr;
  LlmProfile profile;
  int top_k = 3;
};

class Environment {
 public:
  explicit Environment(EnvSpec spec = {});

  const std::vector<Action>& history() const { return history_; }
  const EnvSpec& spec() const { return spec_; }
  int window() const { return spec_.window; }

  bool visible(const std::string& agent, const Action& action) const;
  std::vector<Action> visible_to(const std::string& agent) const;

  // Last W visible actions plus retrieved memories and the scratchpad. The
  // memory query is the content of the last three visible actions, or
  // fallback_query when none are visible. Does not mutate anything.
  Observation observed(const std::string& agent, const std::string& state, const std::string& fallback_query,
                       const MemoryHandles& memory, Gateway& gateway, const EventSink& sink) const;

  // Requires action.turn_index == history().size(); emits ActionEmitted.
  void update(Action action, const EventSink& sink);

 private:
  EnvSpec spec_;
  std::vector<Action> history_;
};

std::vector<Action> actions_from_events(const std::vector<SessionEvent>& events);
std::string render_transcript(const std::string& session_id, const std::vector<Action>& actions);

}  // namespace agents
