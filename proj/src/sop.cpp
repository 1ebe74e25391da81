#include "agents/sop.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "agents/error.hpp"

namespace agents {

using nlohmann::json;

namespace {

std::string slot_of(const ComponentSpec& c) {
  return c.kind == ComponentKind::prompt ? "prompt:" + to_string(c.part) : "tool:" + c.tool;
}

std::optional<std::string> parse_tag(const std::string& reply, const std::regex& re) {
  std::smatch m;
  if (!std::regex_search(reply, m, re)) return std::nullopt;
  return m[1].str();
}

const std::vector<ComponentSpec>& empty_components() {
  static const std::vector<ComponentSpec> none;
  return none;
}

}  // namespace

std::string to_string(TransitDecision::Kind k) {
  switch (k) {
    case TransitDecision::Kind::stay:
      return "stay";
    case TransitDecision::Kind::move:
      return "move";
    case TransitDecision::Kind::finish:
      return "finish";
  }
  return "stay";
}

const std::vector<ComponentSpec>& State::components_for(const std::string& agent) const {
  auto it = components.find(agent);
  return it == components.end() ? empty_components() : it->second;
}

std::string State::task_text(const std::string& agent) const {
  std::string out;
  for (const auto& c : components_for(agent)) {
    if (c.kind != ComponentKind::prompt || c.part != PromptPart::task) continue;
    if (!out.empty()) out += "\n";
    out += c.text;
  }
  return out.empty() ? description : out;
}

State resolve_state(const std::string& name, const StateSpec& spec) {
  State s;
  s.name = name;
  s.description = spec.description;
  s.eligible_agents = spec.agents;
  s.terminal = spec.terminal;
  s.transitions = spec.transitions;
  s.max_turns = spec.max_turns;

  const std::vector<ComponentSpec>* wildcard = nullptr;
  if (auto it = spec.components.find("*"); it != spec.components.end()) wildcard = &it->second;

  std::set<std::string> agents(spec.agents.begin(), spec.agents.end());
  for (const auto& [who, _] : spec.components) {
    if (who != "*") agents.insert(who);
  }
  for (const auto& agent : agents) {
    std::vector<ComponentSpec> own;
    if (auto it = spec.components.find(agent); it != spec.components.end()) own = it->second;
    std::set<std::string> slots;
    for (const auto& c : own) slots.insert(slot_of(c));
    std::vector<ComponentSpec> merged;
    if (wildcard) {
      for (const auto& c : *wildcard) {
        if (!slots.contains(slot_of(c))) merged.push_back(c);
      }
    }
    merged.insert(merged.end(), own.begin(), own.end());
    s.components[agent] = std::move(merged);
  }
  return s;
}

std::optional<std::string> parse_next_state(const std::string& reply) {
  static const std::regex re(R"(<next_state>\s*([^<]*?)\s*</next_state>)");
  return parse_tag(reply, re);
}

std::optional<std::string> parse_next_agent(const std::string& reply) {
  static const std::regex re(R"(<next_agent>\s*([^<]*?)\s*</next_agent>)");
  return parse_tag(reply, re);
}

bool says_continue(const std::string& reply) {
  static const std::regex re(R"((^|[^A-Za-z_])CONTINUE([^A-Za-z_]|$))");
  return std::regex_search(reply, re);
}

Sop::Sop(const SystemConfig& config, const ToolRegistry* tools) : config_(config), tools_(tools) {
  if (!config_.sop.states.contains(config_.sop.initial_state))
    throw ConfigError(ConfigError::Kind::reference, "REFERENCE_ERROR", "sop.initial_state",
                      "initial_state '" + config_.sop.initial_state + "' is not declared");
  for (const auto& [name, spec] : config_.sop.states) states_.emplace(name, resolve_state(name, spec));
  current_ = config_.sop.initial_state;
}

void Sop::mark_finished(const std::string& reason) {
  if (finished_) return;
  finished_ = true;
  finish_reason_ = reason;
}

std::string Sop::recent_history(const Environment& env) const {
  const auto& h = env.history();
  size_t w = static_cast<size_t>(env.window());
  size_t from = h.size() > w ? h.size() - w : 0;
  std::string out;
  for (size_t i = from; i < h.size(); ++i) out += render_action_line(h[i]) + "\n";
  return out.empty() ? "(none yet)\n" : out;
}

ChatRequest Sop::controller_request(const std::string& instruction, const std::string& body) const {
  ChatRequest req;
  req.temperature = config_.llm.temperature;
  req.max_output_tokens = config_.llm.max_output_tokens;
  req.messages.push_back({Role::system, instruction});
  req.messages.push_back({Role::user, body});
  return req;
}

TransitDecision Sop::transit(const Environment& env, const ControllerEnv& ctl) {
  if (finished_) throw Error("transit on a finished SOP");
  const State& s = current_state();
  auto decide = [&](TransitDecision d, const std::string& via, bool forced) {
    json payload = {{"from", s.name}, {"decision", to_string(d.kind)}, {"via", via}, {"forced", forced}};
    if (d.target) payload["target"] = *d.target;
    ctl.sink(EventKind::TransitDecided, std::move(payload));
    return d;
  };
  using Kind = TransitDecision::Kind;

  if (s.terminal) {
    int limit = s.max_turns.value_or(1);
    if (turns_ >= limit) return decide({Kind::finish, std::nullopt}, "rule", true);
    return decide({Kind::stay, std::nullopt}, "rule", false);
  }
  if (s.transitions.empty()) return decide({Kind::stay, std::nullopt}, "rule", false);

  bool forced = s.max_turns && turns_ >= *s.max_turns;
  if (forced && s.transitions.size() == 1) return decide({Kind::move, s.transitions.front()}, "rule", true);

  std::string body = "Current state: " + s.name + "\n";
  if (!s.description.empty()) body += "Description: " + s.description + "\n";
  body += "Turns taken in this state: " + std::to_string(turns_) + "\n\nCandidate next states:\n";
  for (const auto& t : s.transitions) {
    const auto& cand = states_.at(t);
    body += "- " + t + (cand.description.empty() ? "" : ": " + cand.description) + "\n";
  }
  body += "\nRecent actions:\n" + recent_history(env) + "\n";
  if (forced) {
    body += "This state has reached its turn limit. Reply with <next_state>NAME</next_state> naming one of the "
            "candidate states.";
  } else {
    body += "Reply with <next_state>NAME</next_state> to move to one of the candidate states, or with CONTINUE to "
            "stay in the current state.";
  }
  ChatRequest req = controller_request(config_.sop.controller.transit_instruction, body);

  std::string last_reply;
  try {
    for (int attempt = 0; attempt < 2; ++attempt) {
      ChatResponse r = ctl.gateway.complete(ctl.profile, req, {"transit", "", s.name});
      last_reply = r.text.value_or("");
      if (auto name = parse_next_state(last_reply)) {
        if (std::find(s.transitions.begin(), s.transitions.end(), *name) != s.transitions.end())
          return decide({Kind::move, *name}, "llm", forced);
      } else if (!forced && says_continue(last_reply)) {
        return decide({Kind::stay, std::nullopt}, "llm", false);
      }
    }
    warn(ctl.sink, "INVALID_TRANSIT", "controller gave no valid transit decision", {{"state", s.name}, {"reply", last_reply}});
  } catch (const ProviderError& e) {
    warn(ctl.sink, "CONTROLLER_PROVIDER_ERROR", e.what(), {{"state", s.name}, {"purpose", "transit"}});
  }
  if (forced) return decide({Kind::move, s.transitions.front()}, "fallback", true);
  return decide({Kind::stay, std::nullopt}, "fallback", false);
}

RouteDecision Sop::route(const Environment& env, const ControllerEnv& ctl) {
  const State& s = current_state();
  const auto& eligible = s.eligible_agents;
  if (eligible.empty()) throw Error("state '" + s.name + "' has no eligible agents");
  if (eligible.size() == 1) return {eligible.front(), "single"};

  std::string body = "Current state: " + s.name + "\n";
  if (!s.description.empty()) body += "Description: " + s.description + "\n";
  body += "\nAgents that may act:\n";
  for (const auto& a : eligible) {
    auto it = config_.agents.find(a);
    body += "- " + a + (it == config_.agents.end() ? "" : ": " + it->second.role) + "\n";
  }
  if (!previous_actor_.empty()) body += "\nPrevious actor: " + previous_actor_ + "\n";
  body += "\nRecent actions:\n" + recent_history(env) +
          "\nReply with <next_agent>NAME</next_agent> naming exactly one of the agents above.";
  ChatRequest req = controller_request(config_.sop.controller.route_instruction, body);

  std::string last_reply;
  try {
    for (int attempt = 0; attempt < 2; ++attempt) {
      ChatResponse r = ctl.gateway.complete(ctl.profile, req, {"route", "", s.name});
      last_reply = r.text.value_or("");
      if (auto name = parse_next_agent(last_reply)) {
        if (std::find(eligible.begin(), eligible.end(), *name) != eligible.end()) return {*name, "llm"};
      }
    }
    warn(ctl.sink, "INVALID_ROUTE", "controller gave no valid agent", {{"state", s.name}, {"reply", last_reply}});
  } catch (const ProviderError& e) {
    warn(ctl.sink, "CONTROLLER_PROVIDER_ERROR", e.what(), {{"state", s.name}, {"purpose", "route"}});
  }
  // round-robin: the eligible agent after the previous actor
  auto it = std::find(eligible.begin(), eligible.end(), previous_actor_);
  if (it == eligible.end()) return {eligible.front(), "fallback"};
  ++it;
  return {it == eligible.end() ? eligible.front() : *it, "fallback"};
}

NextResult Sop::next(const Environment& env, const ControllerEnv& ctl) {
  if (finished_) throw Error("next() on a finished SOP");
  if (step_count_ >= config_.sop.max_steps) {
    mark_finished("max_steps");
    return {true, finish_reason_, "", nullptr};
  }
  if (turns_ > 0) {
    TransitDecision d = transit(env, ctl);
    if (d.kind == TransitDecision::Kind::finish) {
      mark_finished("terminal_state");
      return {true, finish_reason_, "", nullptr};
    }
    if (d.kind == TransitDecision::Kind::move) {
      std::string from = current_;
      current_ = *d.target;
      turns_ = 0;
      ctl.sink(EventKind::StateEntered, {{"state", current_}, {"from", from}});
    }
  }
  const State& s = current_state();
  if (s.eligible_agents.empty()) {
    // only terminal states may have no agents: nothing left to do
    mark_finished("terminal_state");
    return {true, finish_reason_, "", nullptr};
  }
  RouteDecision r = route(env, ctl);
  ++step_count_;
  ++turns_;
  previous_actor_ = r.agent;
  ctl.sink(EventKind::AgentSelected, {{"agent", r.agent}, {"state", s.name}, {"step", step_count_}, {"via", r.via}});
  return {false, "", r.agent, &s};
}

void Sop::add_states(const std::vector<std::pair<std::string, StateSpec>>& new_states,
                     const std::vector<std::pair<std::string, std::string>>& edges) {
  SystemConfig candidate = config_;
  auto& states = candidate.sop.states;
  for (const auto& [name, spec] : new_states) {
    if (states.contains(name)) throw SopPatchError("DUPLICATE_STATE", "state '" + name + "' already exists");
    states.emplace(name, spec);
  }
  for (const auto& [from, to] : edges) {
    auto it = states.find(from);
    if (it == states.end()) throw SopPatchError("DANGLING_REFERENCE", "edge source '" + from + "' is not declared");
    if (!states.contains(to)) throw SopPatchError("DANGLING_REFERENCE", "edge target '" + to + "' is not declared");
    auto& t = it->second.transitions;
    if (std::find(t.begin(), t.end(), to) == t.end()) t.push_back(to);
  }
  ValidationReport report = validate(candidate, tools_);
  for (const auto& e : report.errors) {
    if (e.path.rfind("sop", 0) != 0) continue;
    std::string code = e.code == "REFERENCE_ERROR" ? "DANGLING_REFERENCE" : "INVALID_PATCH";
    throw SopPatchError(code, e.path + ": " + e.message);
  }

  std::map<std::string, State> resolved;
  for (const auto& [name, spec] : states) resolved.emplace(name, resolve_state(name, spec));
  config_ = std::move(candidate);
  states_ = std::move(resolved);
}

ChatRequest assemble_prompt(const State& state, const std::string& agent, const AgentSpec& spec,
                            const Observation& observation, const std::vector<ToolResult>& prepended,
                            const ToolRegistry* tools, const LlmProfile& profile) {
  ChatRequest req;
  req.temperature = profile.temperature;
  req.max_output_tokens = profile.max_output_tokens;
  req.messages.push_back({Role::system, spec.role});

  std::vector<const ComponentSpec*> prompts;
  for (const auto& c : state.components_for(agent)) {
    if (c.kind == ComponentKind::prompt) prompts.push_back(&c);
  }
  std::stable_sort(prompts.begin(), prompts.end(),
                   [](const ComponentSpec* a, const ComponentSpec* b) { return a->part < b->part; });

  static const std::map<PromptPart, std::string> headings = {{PromptPart::task, "Task"},
                                                             {PromptPart::rules, "Rules"},
                                                             {PromptPart::demonstrations, "Demonstrations"},
                                                             {PromptPart::output_format, "Output format"},
                                                             {PromptPart::custom, "Notes"}};
  std::string user;
  std::optional<PromptPart> open;
  for (const auto* c : prompts) {
    if (open != c->part) {
      if (!user.empty()) user += "\n";
      user += "## " + headings.at(c->part) + "\n";
      open = c->part;
    }
    user += c->text + "\n";
  }
  if (!prepended.empty()) {
    if (!user.empty()) user += "\n";
    user += "## Tool results\n";
    for (const auto& r : prepended)
      user += "### " + r.tool_name + "\n" + (r.ok ? r.content : "error: " + r.error.value_or("")) + "\n";
  }
  if (!user.empty()) user += "\n";
  user += render_observation(observation);
  req.messages.push_back({Role::user, user});

  if (tools) {
    std::set<std::string> seen;
    for (const auto& c : state.components_for(agent)) {
      if (c.kind != ComponentKind::tool || c.mode != ToolMode::function_call || !seen.insert(c.tool).second) continue;
      if (const ToolDef* def = tools->find(c.tool)) req.functions.push_back(def->decl);
    }
  }
  return req;
}

}  // namespace agents
