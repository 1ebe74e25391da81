#include "agents/config.hpp"

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "agents/error.hpp"
#include "agents/tools.hpp"

namespace agents {

using nlohmann::json;

std::string to_string(Provider p) {
  switch (p) {
    case Provider::openai_compatible:
      return "openai-compatible";
    case Provider::mock:
      return "mock";
  }
  return "unknown";
}

std::string to_string(PromptPart p) {
  switch (p) {
    case PromptPart::task:
      return "task";
    case PromptPart::rules:
      return "rules";
    case PromptPart::demonstrations:
      return "demonstrations";
    case PromptPart::output_format:
      return "output_format";
    case PromptPart::custom:
      return "custom";
  }
  return "unknown";
}

std::string to_string(ToolMode m) {
  return m == ToolMode::prepend ? "prepend" : "function_call";
}

bool is_valid_name(std::string_view name) {
  if (name.empty() || name.size() > 64) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

namespace {

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string& base, size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

// Decodes the document shape, collecting issues instead of stopping at the
// first one. Fields that fail to decode keep their defaults.
class Decoder {
 public:
  std::vector<ValidationIssue> issues;

  void fail(const std::string& path, const std::string& code, const std::string& message) {
    issues.push_back({path, code, message});
  }

  bool object(const json& v, const std::string& path) {
    if (v.is_object()) return true;
    fail(path, "TYPE_MISMATCH", "expected an object");
    return false;
  }

  void keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, _] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        fail(join_path(path, k), "UNKNOWN_KEY", "unknown key '" + k + "'");
    }
  }

  const json* field(const json& obj, const std::string& key, const std::string& path, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(join_path(path, key), "MISSING_FIELD", "missing required field '" + key + "'");
      return nullptr;
    }
    return &*it;
  }

  void str(const json& obj, const std::string& key, const std::string& path, std::string& out,
           bool required = false) {
    const json* v = field(obj, key, path, required);
    if (!v) return;
    if (!v->is_string()) return fail(join_path(path, key), "TYPE_MISMATCH", "expected a string");
    out = v->get<std::string>();
  }

  void boolean(const json& obj, const std::string& key, const std::string& path, bool& out) {
    const json* v = field(obj, key, path, false);
    if (!v) return;
    if (!v->is_boolean()) return fail(join_path(path, key), "TYPE_MISMATCH", "expected a boolean");
    out = v->get<bool>();
  }

  void integer(const json& obj, const std::string& key, const std::string& path, int& out,
               bool required = false) {
    const json* v = field(obj, key, path, required);
    if (!v) return;
    if (!v->is_number_integer()) return fail(join_path(path, key), "TYPE_MISMATCH", "expected an integer");
    out = v->get<int>();
  }

  void opt_integer(const json& obj, const std::string& key, const std::string& path, std::optional<int>& out) {
    int value = 0;
    size_t before = issues.size();
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    integer(obj, key, path, value);
    if (issues.size() == before) out = value;
  }

  void number(const json& obj, const std::string& key, const std::string& path, double& out) {
    const json* v = field(obj, key, path, false);
    if (!v) return;
    if (!v->is_number()) return fail(join_path(path, key), "TYPE_MISMATCH", "expected a number");
    out = v->get<double>();
  }

  void strings(const json& obj, const std::string& key, const std::string& path, std::vector<std::string>& out) {
    const json* v = field(obj, key, path, false);
    if (!v) return;
    std::string p = join_path(path, key);
    if (!v->is_array()) return fail(p, "TYPE_MISMATCH", "expected a list of strings");
    for (size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) {
        fail(index_path(p, i), "TYPE_MISMATCH", "expected a string");
        continue;
      }
      out.push_back((*v)[i].get<std::string>());
    }
  }

  LlmProfile profile(const json& v, const std::string& path) {
    LlmProfile p;
    if (!object(v, path)) return p;
    keys(v, path,
         {"provider", "model", "temperature", "api_base", "api_key_env", "max_output_tokens", "embedding_model",
          "embedding_dim", "mock_script"});
    std::string provider = "openai-compatible";
    str(v, "provider", path, provider);
    if (provider == "mock") {
      p.provider = Provider::mock;
    } else if (provider == "openai-compatible") {
      p.provider = Provider::openai_compatible;
    } else {
      fail(join_path(path, "provider"), "INVALID_VALUE", "unknown provider '" + provider + "'");
    }
    str(v, "model", path, p.model);
    number(v, "temperature", path, p.temperature);
    str(v, "api_base", path, p.api_base);
    str(v, "api_key_env", path, p.api_key_env);
    integer(v, "max_output_tokens", path, p.max_output_tokens);
    str(v, "embedding_model", path, p.embedding_model);
    integer(v, "embedding_dim", path, p.embedding_dim);
    if (auto it = v.find("mock_script"); it != v.end()) {
      if (it->is_string() || it->is_array() || it->is_null()) {
        p.mock_script = *it;
      } else {
        fail(join_path(path, "mock_script"), "TYPE_MISMATCH", "expected a path or a list of entries");
      }
    }
    return p;
  }

  AgentSpec agent(const json& v, const std::string& path) {
    AgentSpec a;
    if (!object(v, path)) return a;
    keys(v, path, {"role", "is_human", "memory", "llm"});
    str(v, "role", path, a.role, true);
    boolean(v, "is_human", path, a.is_human);
    if (const json* m = field(v, "memory", path, false)) {
      std::string mp = join_path(path, "memory");
      if (object(*m, mp)) {
        keys(*m, mp, {"long_term", "short_term"});
        boolean(*m, "long_term", mp, a.memory.long_term);
        boolean(*m, "short_term", mp, a.memory.short_term);
      }
    }
    if (const json* l = field(v, "llm", path, false); l && !l->is_null()) a.llm = profile(*l, join_path(path, "llm"));
    return a;
  }

  ComponentSpec component(const json& v, const std::string& path) {
    ComponentSpec c;
    if (!object(v, path)) return c;
    std::string kind;
    str(v, "kind", path, kind, true);
    if (kind == "prompt") {
      c.kind = ComponentKind::prompt;
      keys(v, path, {"kind", "part", "text"});
      std::string part;
      str(v, "part", path, part, true);
      static const std::map<std::string, PromptPart> parts = {{"task", PromptPart::task},
                                                              {"rules", PromptPart::rules},
                                                              {"demonstrations", PromptPart::demonstrations},
                                                              {"output_format", PromptPart::output_format},
                                                              {"custom", PromptPart::custom}};
      if (auto it = parts.find(part); it != parts.end()) {
        c.part = it->second;
      } else if (!part.empty()) {
        fail(join_path(path, "part"), "INVALID_VALUE", "unknown prompt part '" + part + "'");
      }
      str(v, "text", path, c.text, true);
    } else if (kind == "tool") {
      c.kind = ComponentKind::tool;
      keys(v, path, {"kind", "name", "params", "mode"});
      str(v, "name", path, c.tool, true);
      if (const json* p = field(v, "params", path, false)) {
        if (p->is_object()) {
          c.params = *p;
        } else {
          fail(join_path(path, "params"), "TYPE_MISMATCH", "expected an object");
        }
      }
      std::string mode = "prepend";
      str(v, "mode", path, mode);
      if (mode == "prepend") {
        c.mode = ToolMode::prepend;
      } else if (mode == "function_call") {
        c.mode = ToolMode::function_call;
      } else {
        fail(join_path(path, "mode"), "INVALID_VALUE", "unknown tool mode '" + mode + "'");
      }
    } else if (!kind.empty()) {
      fail(join_path(path, "kind"), "INVALID_VALUE", "unknown component kind '" + kind + "'");
    }
    return c;
  }

  StateSpec state(const json& v, const std::string& path) {
    StateSpec s;
    if (!object(v, path)) return s;
    keys(v, path, {"description", "agents", "terminal", "transitions", "max_turns", "components"});
    str(v, "description", path, s.description);
    strings(v, "agents", path, s.agents);
    boolean(v, "terminal", path, s.terminal);
    strings(v, "transitions", path, s.transitions);
    opt_integer(v, "max_turns", path, s.max_turns);
    if (const json* c = field(v, "components", path, false)) {
      std::string cp = join_path(path, "components");
      if (object(*c, cp)) {
        for (const auto& [who, list] : c->items()) {
          std::string lp = join_path(cp, who);
          if (!list.is_array()) {
            fail(lp, "TYPE_MISMATCH", "expected a list of components");
            continue;
          }
          auto& out = s.components[who];
          for (size_t i = 0; i < list.size(); ++i) out.push_back(component(list[i], index_path(lp, i)));
        }
      }
    }
    return s;
  }

  SopSpec sop(const json& v, const std::string& path) {
    SopSpec s;
    if (!object(v, path)) return s;
    keys(v, path, {"initial_state", "controller", "states", "max_steps", "dynamic_planning"});
    str(v, "initial_state", path, s.initial_state, true);
    if (const json* c = field(v, "controller", path, false)) {
      std::string cp = join_path(path, "controller");
      if (object(*c, cp)) {
        keys(*c, cp, {"transit_instruction", "route_instruction"});
        str(*c, "transit_instruction", cp, s.controller.transit_instruction);
        str(*c, "route_instruction", cp, s.controller.route_instruction);
      }
    }
    if (const json* st = field(v, "states", path, true)) {
      std::string sp = join_path(path, "states");
      if (object(*st, sp)) {
        for (const auto& [name, body] : st->items()) s.states[name] = state(body, join_path(sp, name));
      }
    }
    integer(v, "max_steps", path, s.max_steps);
    boolean(v, "dynamic_planning", path, s.dynamic_planning);
    return s;
  }

  EnvSpec environment(const json& v, const std::string& path) {
    EnvSpec e;
    if (!object(v, path)) return e;
    keys(v, path, {"window", "memory_top_k", "visibility", "human_memory", "human_timeout_ms"});
    integer(v, "window", path, e.window);
    integer(v, "memory_top_k", path, e.memory_top_k);
    if (const json* vis = field(v, "visibility", path, false)) {
      std::string vp = join_path(path, "visibility");
      if (vis->is_string()) {
        if (vis->get<std::string>() != "public") fail(vp, "INVALID_VALUE", "visibility must be 'public' or a map");
      } else if (vis->is_object()) {
        for (const auto& [agent, states] : vis->items()) {
          std::vector<std::string> list;
          json holder = {{agent, states}};
          strings(holder, agent, vp, list);
          e.visibility[agent] = std::move(list);
        }
      } else {
        fail(vp, "TYPE_MISMATCH", "expected 'public' or a map of agent to states");
      }
    }
    boolean(v, "human_memory", path, e.human_memory);
    opt_integer(v, "human_timeout_ms", path, e.human_timeout_ms);
    return e;
  }

  SystemConfig config(const json& v) {
    SystemConfig c;
    if (!object(v, "")) return c;
    keys(v, "", {"version", "description", "llm", "agents", "sop", "environment"});
    integer(v, "version", "", c.version, true);
    str(v, "description", "", c.description);
    if (const json* l = field(v, "llm", "", false)) c.llm = profile(*l, "llm");
    if (const json* a = field(v, "agents", "", true)) {
      if (object(*a, "agents")) {
        for (const auto& [name, body] : a->items()) c.agents[name] = agent(body, join_path("agents", name));
      }
    }
    if (const json* s = field(v, "sop", "", true)) c.sop = sop(*s, "sop");
    if (const json* e = field(v, "environment", "", false)) c.environment = environment(*e, "environment");
    return c;
  }
};

ConfigError to_error(const ValidationIssue& issue) {
  auto kind = issue.code == "SYNTAX_ERROR"      ? ConfigError::Kind::syntax
              : issue.code == "REFERENCE_ERROR" ? ConfigError::Kind::reference
                                                : ConfigError::Kind::schema;
  std::string where = issue.path.empty() ? "<root>" : issue.path;
  return ConfigError(kind, issue.code, issue.path, where + ": " + issue.message);
}

json parse_json(std::string_view source) {
  try {
    return json::parse(source.begin(), source.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(ConfigError::Kind::syntax, "SYNTAX_ERROR", "", std::string("malformed JSON: ") + e.what());
  }
}

void check_profile(const LlmProfile& p, const std::string& path, bool script_required,
                   std::vector<ValidationIssue>& errors) {
  if (p.temperature < 0) errors.push_back({join_path(path, "temperature"), "INVALID_VALUE", "temperature must be >= 0"});
  if (p.max_output_tokens < 1)
    errors.push_back({join_path(path, "max_output_tokens"), "INVALID_VALUE", "max_output_tokens must be positive"});
  if (p.embedding_dim < 1)
    errors.push_back({join_path(path, "embedding_dim"), "INVALID_VALUE", "embedding_dim must be positive"});
  if (p.provider == Provider::mock && script_required && p.mock_script.is_null())
    errors.push_back({join_path(path, "mock_script"), "MOCK_SCRIPT_MISSING", "mock provider requires a mock_script"});
}

void check_components(const std::string& state_path, const StateSpec& state, const SystemConfig& config,
                      const ToolRegistry* tools, std::vector<ValidationIssue>& errors) {
  for (const auto& [who, list] : state.components) {
    std::string lp = join_path(join_path(state_path, "components"), who);
    if (who != "*" && !config.agents.contains(who))
      errors.push_back({lp, "REFERENCE_ERROR", "components reference undeclared agent '" + who + "'"});
    for (size_t i = 0; i < list.size(); ++i) {
      const auto& c = list[i];
      std::string cp = index_path(lp, i);
      if (c.kind == ComponentKind::prompt) {
        if (c.text.empty()) errors.push_back({join_path(cp, "text"), "EMPTY_PROMPT", "prompt text must be non-empty"});
        continue;
      }
      if (!tools) continue;
      const ToolDef* def = tools->find(c.tool);
      if (!def) {
        errors.push_back({join_path(cp, "name"), "TOOL_UNKNOWN", "tool '" + c.tool + "' is not registered"});
      } else if (!def->modes.contains(c.mode)) {
        errors.push_back({join_path(cp, "mode"), "TOOL_MODE_UNSUPPORTED",
                          "tool '" + c.tool + "' does not support mode " + to_string(c.mode)});
      }
    }
  }
}

}  // namespace

SystemConfig config_from_json(const json& doc) {
  Decoder d;
  SystemConfig c = d.config(doc);
  if (!d.issues.empty()) throw to_error(d.issues.front());
  return c;
}

SystemConfig parse_config(std::string_view source) {
  SystemConfig c = config_from_json(parse_json(source));
  ValidationReport r = validate(c, nullptr);
  if (!r.ok) throw to_error(r.errors.front());
  return c;
}

SystemConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

LlmProfile profile_from_json(const json& doc) {
  Decoder d;
  LlmProfile p = d.profile(doc, "llm");
  if (!d.issues.empty()) throw to_error(d.issues.front());
  return p;
}

StateSpec state_from_json(const json& doc, const std::string& path) {
  Decoder d;
  StateSpec s = d.state(doc, path);
  if (!d.issues.empty()) throw to_error(d.issues.front());
  return s;
}

ValidationReport validate(const SystemConfig& config, const ToolRegistry* tools) {
  ValidationReport report;
  auto& errors = report.errors;
  auto& warnings = report.warnings;

  if (config.version != 1)
    errors.push_back({"version", "VERSION_UNSUPPORTED", "only version 1 is supported"});
  check_profile(config.llm, "llm", true, errors);

  if (config.agents.empty()) errors.push_back({"agents", "EMPTY_AGENTS", "at least one agent is required"});
  for (const auto& [name, agent] : config.agents) {
    std::string ap = join_path("agents", name);
    if (!is_valid_name(name)) errors.push_back({ap, "INVALID_NAME", "agent name must match [A-Za-z0-9_-]{1,64}"});
    if (agent.llm && !agent.is_human)
      check_profile(*agent.llm, join_path(ap, "llm"), config.llm.provider != Provider::mock, errors);
  }

  const auto& sop = config.sop;
  if (sop.max_steps < 1) errors.push_back({"sop.max_steps", "INVALID_VALUE", "max_steps must be positive"});
  if (!sop.states.contains(sop.initial_state))
    errors.push_back({"sop.initial_state", "REFERENCE_ERROR", "initial_state '" + sop.initial_state + "' is not declared"});
  if (sop.states.empty()) errors.push_back({"sop.states", "EMPTY_STATES", "at least one state is required"});

  for (const auto& [name, state] : sop.states) {
    std::string sp = join_path("sop.states", name);
    if (!is_valid_name(name)) errors.push_back({sp, "INVALID_NAME", "state name must match [A-Za-z0-9_-]{1,64}"});
    if (state.agents.empty() && !state.terminal)
      errors.push_back({join_path(sp, "agents"), "STATE_NO_AGENTS", "non-terminal state needs at least one agent"});
    for (size_t i = 0; i < state.agents.size(); ++i) {
      if (!config.agents.contains(state.agents[i]))
        errors.push_back({index_path(join_path(sp, "agents"), i), "REFERENCE_ERROR",
                          "agent '" + state.agents[i] + "' is not declared"});
    }
    for (size_t i = 0; i < state.transitions.size(); ++i) {
      if (!sop.states.contains(state.transitions[i]))
        errors.push_back({index_path(join_path(sp, "transitions"), i), "REFERENCE_ERROR",
                          "transition target '" + state.transitions[i] + "' is not declared"});
    }
    if (state.terminal && !state.transitions.empty())
      warnings.push_back({join_path(sp, "transitions"), "TERMINAL_TRANSITIONS_IGNORED",
                          "terminal states only stay or finish"});
    if (state.max_turns && *state.max_turns < 1)
      errors.push_back({join_path(sp, "max_turns"), "INVALID_VALUE", "max_turns must be positive"});
    check_components(sp, state, config, tools, errors);
  }

  const auto& env = config.environment;
  if (env.window < 1) errors.push_back({"environment.window", "INVALID_VALUE", "window must be >= 1"});
  if (env.memory_top_k < 1) errors.push_back({"environment.memory_top_k", "INVALID_VALUE", "memory_top_k must be >= 1"});
  if (env.human_timeout_ms && *env.human_timeout_ms < 1)
    errors.push_back({"environment.human_timeout_ms", "INVALID_VALUE", "human_timeout_ms must be positive"});
  for (const auto& [agent, states] : env.visibility) {
    std::string vp = join_path("environment.visibility", agent);
    if (!config.agents.contains(agent))
      errors.push_back({vp, "REFERENCE_ERROR", "visibility names undeclared agent '" + agent + "'"});
    for (size_t i = 0; i < states.size(); ++i) {
      if (!sop.states.contains(states[i]))
        errors.push_back({index_path(vp, i), "REFERENCE_ERROR", "visibility names undeclared state '" + states[i] + "'"});
    }
  }

  // Reachability: unreachable states are only warnings since states and
  // edges may be added while a session runs.
  if (sop.states.contains(sop.initial_state)) {
    std::set<std::string> seen{sop.initial_state};
    std::deque<std::string> queue{sop.initial_state};
    while (!queue.empty()) {
      const auto& st = sop.states.at(queue.front());
      queue.pop_front();
      if (st.terminal) continue;
      for (const auto& t : st.transitions) {
        if (sop.states.contains(t) && seen.insert(t).second) queue.push_back(t);
      }
    }
    for (const auto& [name, _] : sop.states) {
      if (!seen.contains(name))
        warnings.push_back({join_path("sop.states", name), "STATE_UNREACHABLE",
                            "state '" + name + "' is unreachable from '" + sop.initial_state + "'"});
    }
  }

  report.ok = errors.empty();
  return report;
}

ValidationReport validate_document(std::string_view source, const ToolRegistry* tools) {
  ValidationReport report;
  json doc;
  try {
    doc = parse_json(source);
  } catch (const ConfigError& e) {
    report.ok = false;
    report.errors.push_back({"", e.code(), e.what()});
    return report;
  }
  Decoder d;
  SystemConfig c = d.config(doc);
  if (!d.issues.empty()) {
    report.ok = false;
    report.errors = std::move(d.issues);
    return report;
  }
  return validate(c, tools);
}

json to_json(const LlmProfile& p) {
  json j = {{"provider", to_string(p.provider)},
            {"model", p.model},
            {"temperature", p.temperature},
            {"api_base", p.api_base},
            {"api_key_env", p.api_key_env},
            {"max_output_tokens", p.max_output_tokens},
            {"embedding_model", p.embedding_model},
            {"embedding_dim", p.embedding_dim}};
  if (!p.mock_script.is_null()) j["mock_script"] = p.mock_script;
  return j;
}

namespace {

json to_json(const ComponentSpec& c) {
  if (c.kind == ComponentKind::prompt) return {{"kind", "prompt"}, {"part", to_string(c.part)}, {"text", c.text}};
  return {{"kind", "tool"}, {"name", c.tool}, {"params", c.params}, {"mode", to_string(c.mode)}};
}

}  // namespace

json to_json(const StateSpec& s) {
  json components = json::object();
  for (const auto& [who, list] : s.components) {
    json arr = json::array();
    for (const auto& c : list) arr.push_back(to_json(c));
    components[who] = std::move(arr);
  }
  json j = {{"description", s.description}, {"agents", s.agents},           {"terminal", s.terminal},
            {"transitions", s.transitions}, {"components", components}};
  if (s.max_turns) j["max_turns"] = *s.max_turns;
  return j;
}

json to_json(const SystemConfig& c) {
  json agents = json::object();
  for (const auto& [name, a] : c.agents) {
    json j = {{"role", a.role},
              {"is_human", a.is_human},
              {"memory", {{"long_term", a.memory.long_term}, {"short_term", a.memory.short_term}}}};
    if (a.llm) j["llm"] = to_json(*a.llm);
    agents[name] = std::move(j);
  }
  json states = json::object();
  for (const auto& [name, s] : c.sop.states) states[name] = to_json(s);

  json visibility;
  if (c.environment.visibility.empty()) {
    visibility = "public";
  } else {
    visibility = json::object();
    for (const auto& [agent, list] : c.environment.visibility) visibility[agent] = list;
  }
  json env = {{"window", c.environment.window},
              {"memory_top_k", c.environment.memory_top_k},
              {"visibility", visibility},
              {"human_memory", c.environment.human_memory}};
  if (c.environment.human_timeout_ms) env["human_timeout_ms"] = *c.environment.human_timeout_ms;

  return {{"version", c.version},
          {"description", c.description},
          {"llm", to_json(c.llm)},
          {"agents", agents},
          {"sop",
           {{"initial_state", c.sop.initial_state},
            {"controller",
             {{"transit_instruction", c.sop.controller.transit_instruction},
              {"route_instruction", c.sop.controller.route_instruction}}},
            {"states", states},
            {"max_steps", c.sop.max_steps},
            {"dynamic_planning", c.sop.dynamic_planning}}},
          {"environment", env}};
}

json to_json(const ValidationReport& r) {
  auto list = [](const std::vector<ValidationIssue>& issues) {
    json arr = json::array();
    for (const auto& i : issues) arr.push_back({{"path", i.path}, {"code", i.code}, {"message", i.message}});
    return arr;
  };
  return {{"ok", r.ok}, {"errors", list(r.errors)}, {"warnings", list(r.warnings)}};
}

std::string canonicalize(const SystemConfig& config) {
  return to_json(config).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

void resolve_paths(SystemConfig& config, const std::string& base_dir) {
  auto fix = [&](LlmProfile& p) {
    if (!p.mock_script.is_string()) return;
    std::filesystem::path path = p.mock_script.get<std::string>();
    if (path.is_relative()) p.mock_script = (std::filesystem::path(base_dir) / path).lexically_normal().string();
  };
  fix(config.llm);
  for (auto& [_, a] : config.agents) {
    if (a.llm) fix(*a.llm);
  }
}

}  // namespace agents
