#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "agents/config.hpp"
#include "agents/environment.hpp"
#include "agents/events.hpp"
#include "agents/llm.hpp"
#include "agents/memory.hpp"
#include "agents/sop.hpp"
#include "agents/tools.hpp"

namespace agents {

inline constexpr int kMaxToolRounds = 3;

struct HumanInputRequest {
  std::string session_id;
  std::string agent;
  std::string state;
  Observation observation;
  std::string request_id;
};

// Where a human-backed agent gets its action text. Blocks until the input
// arrives; throws if the wait is abandoned.
class HumanChannel {
 public:
  virtual ~HumanChannel() = default;
  virtual std::string request_input(const std::string& agent, const std::string& state, const Observation& obs) = 0;
};

struct TurnContext {
  Gateway& gateway;
  const ToolRegistry& tools;
  EventSink sink;
  HumanChannel* human = nullptr;
  int turn_index = 0;
};

class Agent {
 public:
  Agent(std::string name, AgentSpec spec, const LlmProfile& global, const EnvSpec& env);

  const std::string& name() const { return name_; }
  const AgentSpec& spec() const { return spec_; }
  bool is_human() const { return spec_.is_human; }
  const LlmProfile& profile() const { return profile_; }
  const LongTermStore* long_term() const { return long_term_ ? &*long_term_ : nullptr; }
  LongTermStore* long_term() { return long_term_ ? &*long_term_ : nullptr; }
  const Scratchpad* scratchpad() const { return scratchpad_ ? &*scratchpad_ : nullptr; }
  int action_count() const { return action_count_; }
  int last_acted_turn() const { return last_acted_turn_; }

  MemoryHandles memory_handles() const;

  Observation observe(const Environment& env, const State& state, Gateway& gateway, const EventSink& sink) const;

  // LLM path: prepend tools, prompt, up to kMaxToolRounds function calls.
  // Human path: no LLM call; the text comes from ctx.human verbatim.
  Action act(const State& state, const Observation& obs, TurnContext& ctx);

  void update_memory(const Action& action, const Observation& obs, Gateway& gateway, const EventSink& sink);

  // observe -> act -> update_memory. The caller appends the action to the
  // environment.
  Action step(const State& state, const Environment& env, TurnContext& ctx);

 private:
  Action act_with_llm(const State& state, const Observation& obs, TurnContext& ctx);

  std::string name_;
  AgentSpec spec_;
  LlmProfile profile_;
  int top_k_;
  bool memory_enabled_;
  std::optional<LongTermStore> long_term_;
  std::optional<Scratchpad> scratchpad_;
  int action_count_ = 0;
  int last_acted_turn_ = -1;
};

std::map<std::string, Agent> agents_from_config(const SystemConfig& config);

std::string digest_result(const ToolResult& r);

}  // namespace agents
