#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agents/config.hpp"
#include "agents/environment.hpp"
#include "agents/error.hpp"
#include "agents/events.hpp"
#include "agents/llm.hpp"
#include "agents/tools.hpp"

namespace agents {

// A state with its "*" components already merged into per-agent lists.
struct State {
  std::string name;
  std::string description;
  std::vector<std::string> eligible_agents;
  bool terminal = false;
  std::vector<std::string> transitions;
  std::optional<int> max_turns;
  std::map<std::string, std::vector<ComponentSpec>> components;

  const std::vector<ComponentSpec>& components_for(const std::string& agent) const;
  std::string task_text(const std::string& agent) const;
};

// Agent-specific entries replace "*" entries of the same slot (prompt part,
// or tool name); other "*" entries are kept.
State resolve_state(const std::string& name, const StateSpec& spec);

struct TransitDecision {
  enum class Kind { stay, move, finish };
  Kind kind = Kind::stay;
  std::optional<std::string> target;

  bool operator==(const TransitDecision&) const = default;
};

std::string to_string(TransitDecision::Kind k);

struct RouteDecision {
  std::string agent;
  std::string via;  // single | llm | fallback
};

struct NextResult {
  bool finished = false;
  std::string finish_reason;  // terminal_state | max_steps
  std::string agent;
  const State* state = nullptr;
};

class SopPatchError : public Error {
 public:
  SopPatchError(std::string code, const std::string& message) : Error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Controller replies. Tags may be surrounded by other text.
std::optional<std::string> parse_next_state(const std::string& reply);
std::optional<std::string> parse_next_agent(const std::string& reply);
bool says_continue(const std::string& reply);

struct ControllerEnv {
  Gateway& gateway;
  const LlmProfile& profile;
  const EventSink& sink;
};

class Sop {
 public:
  Sop(const SystemConfig& config, const ToolRegistry* tools = nullptr);

  bool finished() const { return finished_; }
  const std::string& finish_reason() const { return finish_reason_; }
  const std::string& current_state_name() const { return current_; }
  const State& current_state() const { return states_.at(current_); }
  const State& state(const std::string& name) const { return states_.at(name); }
  const std::map<std::string, State>& states() const { return states_; }
  const SopSpec& spec() const { return config_.sop; }
  int step_count() const { return step_count_; }
  int max_steps() const { return config_.sop.max_steps; }
  int turns_in_current_state() const { return turns_; }
  const std::string& previous_actor() const { return previous_actor_; }

  // Stay, move to a candidate, or finish. Makes no LLM call when the rules
  // decide (no candidates, terminal states, a single forced candidate).
  TransitDecision transit(const Environment& env, const ControllerEnv& ctl);

  RouteDecision route(const Environment& env, const ControllerEnv& ctl);

  // Transit (skipped on the first turn in a state), then route in the
  // resulting state.
  NextResult next(const Environment& env, const ControllerEnv& ctl);

  // All-or-nothing: on any error the graph is unchanged.
  void add_states(const std::vector<std::pair<std::string, StateSpec>>& new_states,
                  const std::vector<std::pair<std::string, std::string>>& edges);

  void mark_finished(const std::string& reason);

 private:
  ChatRequest controller_request(const std::string& instruction, const std::string& body) const;
  std::string recent_history(const Environment& env) const;

  SystemConfig config_;
  const ToolRegistry* tools_;
  std::map<std::string, State> states_;
  std::string current_;
  bool finished_ = false;
  std::string finish_reason_;
  int step_count_ = 0;
  int turns_ = 0;
  std::string previous_actor_;
};

ChatRequest assemble_prompt(const State& state, const std::string& agent, const AgentSpec& spec,
                            const Observation& observation, const std::vector<ToolResult>& prepended,
                            const ToolRegistry* tools, const LlmProfile& profile);

}  // namespace agents
