#include "agents/agent.hpp"

#include <set>

#include "agents/error.hpp"
#include "agents/util.hpp"

namespace agents {

using nlohmann::json;

std::string digest_result(const ToolResult& r) {
  std::string body = r.ok ? r.content : "error: " + r.error.value_or("");
  std::string flat;
  for (char c : body) flat.push_back(c == '\n' || c == '\t' ? ' ' : c);
  return bound_content(flat, 200);
}

Agent::Agent(std::string name, AgentSpec spec, const LlmProfile& global, const EnvSpec& env)
    : name_(std::move(name)),
      spec_(std::move(spec)),
      profile_(spec_.llm && !spec_.is_human ? *spec_.llm : global),
      top_k_(env.memory_top_k),
      memory_enabled_(!spec_.is_human || env.human_memory) {
  if (spec_.memory.long_term) long_term_.emplace();
  if (spec_.memory.short_term) scratchpad_.emplace();
}

MemoryHandles Agent::memory_handles() const {
  return {long_term(), scratchpad(), profile_, top_k_};
}

Observation Agent::observe(const Environment& env, const State& state, Gateway& gateway, const EventSink& sink) const {
  return env.observed(name_, state.name, state.task_text(name_), memory_handles(), gateway, sink);
}

Action Agent::act(const State& state, const Observation& obs, TurnContext& ctx) {
  if (std::find(state.eligible_agents.begin(), state.eligible_agents.end(), name_) == state.eligible_agents.end())
    throw Error("agent '" + name_ + "' is not eligible in state '" + state.name + "'");
  Action action;
  if (spec_.is_human) {
    if (!ctx.human) throw Error("no human channel for human agent '" + name_ + "'");
    action.content = ctx.human->request_input(name_, state.name, obs);
    action.is_human_supplied = true;
  } else {
    action = act_with_llm(state, obs, ctx);
  }
  action.turn_index = ctx.turn_index;
  action.agent = name_;
  action.state = state.name;
  action.timestamp = utc_now_iso();
  ++action_count_;
  last_acted_turn_ = ctx.turn_index;
  return action;
}

Action Agent::act_with_llm(const State& state, const Observation& obs, TurnContext& ctx) {
  Action action;
  auto record = [&](const ToolResult& r, const json& params, ToolMode mode) {
    std::string digest = digest_result(r);
    action.tool_calls.push_back({r.tool_name, params, r.ok, digest});
    ctx.sink(EventKind::ToolInvoked, {{"agent", name_},
                                      {"state", state.name},
                                      {"tool", r.tool_name},
                                      {"mode", to_string(mode)},
                                      {"params", params},
                                      {"ok", r.ok},
                                      {"digest", digest}});
  };

  std::vector<ToolResult> prepended;
  std::map<std::string, const ComponentSpec*> callable;
  for (const auto& c : state.components_for(name_)) {
    if (c.kind != ComponentKind::tool) continue;
    if (c.mode == ToolMode::prepend) {
      ToolResult r = ctx.tools.invoke(c.tool, c.params);
      record(r, c.params, ToolMode::prepend);
      prepended.push_back(std::move(r));
    } else {
      callable.emplace(c.tool, &c);
    }
  }

  ChatRequest req = assemble_prompt(state, name_, spec_, obs, prepended, &ctx.tools, profile_);
  CallContext call_ctx{"act", name_, state.name};
  int rounds = 0;
  while (true) {
    ChatResponse resp = ctx.gateway.complete(profile_, req, call_ctx);
    if (resp.kind == ChatResponse::Kind::text) {
      action.content = *resp.text;
      break;
    }
    if (rounds == kMaxToolRounds) {
      warn(ctx.sink, "TOOL_ROUND_LIMIT", "model kept requesting tools after the final round", {{"agent", name_}});
      break;
    }
    const FunctionCall& call = *resp.call;
    json params = call.arguments;
    ToolResult result;
    if (auto it = callable.find(call.name); it != callable.end()) {
      for (const auto& [k, v] : it->second->params.items()) {
        if (!params.contains(k)) params[k] = v;
      }
      result = ctx.tools.invoke(call.name, params);
    } else {
      result = ToolResult::failure(call.name, "tool '" + call.name + "' is not available in this state");
    }
    record(result, params, ToolMode::function_call);
    ++rounds;

    std::string call_id = "call_" + std::to_string(rounds);
    ChatMessage assistant{Role::assistant, "", call, call_id, ""};
    req.messages.push_back(assistant);
    req.messages.push_back(
        {Role::tool, result.ok ? result.content : "error: " + result.error.value_or(""), std::nullopt, call_id, call.name});
    if (rounds == kMaxToolRounds) {
      req.functions.clear();
      req.messages.push_back({Role::user, "Tool budget used up. Give your final answer now without calling tools."});
    }
  }
  if (action.content.empty() && action.tool_calls.empty()) {
    warn(ctx.sink, "EMPTY_REPLY", "model returned an empty reply", {{"agent", name_}});
    action.content = "(no reply)";
  }
  return action;
}

void Agent::update_memory(const Action& action, const Observation& obs, Gateway& gateway, const EventSink& sink) {
  if (!memory_enabled_) return;
  if (long_term_ && !action.content.empty()) {
    try {
      const MemoryRecord r = store(*long_term_, name_, action.state, action.content, action.turn_index, gateway, profile_);
      sink(EventKind::MemoryUpdated, {{"agent", name_}, {"kind", "long_term"}, {"ok", true}, {"record_id", r.id}});
    } catch (const Error& e) {
      sink(EventKind::MemoryUpdated, {{"agent", name_}, {"kind", "long_term"}, {"ok", false}});
      warn(sink, "MEMORY_WRITE_FAILED", e.what(), {{"agent", name_}});
    }
  }
  if (scratchpad_) {
    ScratchpadUpdate u = update_scratchpad(*scratchpad_, action.content, render_observation(obs), action_count_, profile_,
                                           gateway, {"scratchpad", name_, action.state});
    *scratchpad_ = u.pad;
    sink(EventKind::MemoryUpdated,
         {{"agent", name_}, {"kind", "scratchpad"}, {"ok", u.updated}, {"last_updated_turn", scratchpad_->last_updated_turn}});
    if (!u.updated) warn(sink, "SCRATCHPAD_UPDATE_FAILED", u.error, {{"agent", name_}});
  }
}

Action Agent::step(const State& state, const Environment& env, TurnContext& ctx) {
  Observation obs = observe(env, state, ctx.gateway, ctx.sink);
  Action action = act(state, obs, ctx);
  update_memory(action, obs, ctx.gateway, ctx.sink);
  return action;
}

std::map<std::string, Agent> agents_from_config(const SystemConfig& config) {
  std::map<std::string, Agent> out;
  for (const auto& [name, spec] : config.agents) out.emplace(name, Agent(name, spec, config.llm, config.environment));
  return out;
}

}  // namespace agents
