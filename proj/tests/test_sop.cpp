#include <doctest.h>

#include <random>

#include "adversarial.hpp"
#include "agents/sop.hpp"
#include "support.hpp"

using namespace agents;
using nlohmann::json;

namespace {

struct Harness {
  SystemConfig config;
  Environment env;
  Gateway gateway;
  EventLog log;
  EventSink sink;

  Harness(const std::string& config_json, json script)
      : config(parse_config(config_json)), env(config.environment), gateway(options(std::move(script))) {
    log.append(EventKind::SessionStarted, json::object());
    sink = log.sink();
  }
  static GatewayOptions options(json script) {
    GatewayOptions o;
    o.mock_override = mock_script_from_json(script);
    return o;
  }
  ControllerEnv ctl() { return {gateway, config.llm, sink}; }
  std::vector<SessionEvent> of(EventKind k) const {
    std::vector<SessionEvent> out;
    for (auto& e : log.all())
      if (e.kind == k) out.push_back(e);
    return out;
  }
  void act(const std::string& agent, const std::string& state) {
    env.update({static_cast<int>(env.history().size()), agent, state, "said something", {}, false, ""}, null_sink());
  }
};

// Three states: a -> {b, c}; a has two agents.
const char* kGraph = R"({
  "version": 1,
  "agents": {"x": {"role": "X role"}, "y": {"role": "Y role"}},
  "sop": {
    "initial_state": "a",
    "max_steps": 10,
    "states": {
      "a": {"agents": ["x", "y"], "transitions": ["b", "c"], "description": "start"},
      "b": {"agents": ["y"], "terminal": true},
      "c": {"agents": ["x"], "transitions": ["b"], "max_turns": 2}
    }
  }
})";

}  // namespace

TEST_CASE("controller tag parsing") {
  CHECK(parse_next_state("I think <next_state> review </next_state> now") == "review");
  CHECK_FALSE(parse_next_state("next_state: review").has_value());
  CHECK(parse_next_state("<next_state></next_state>") == "");
  CHECK(parse_next_agent("<next_agent>judge</next_agent>") == "judge");
  CHECK(says_continue("CONTINUE"));
  CHECK(says_continue("We should CONTINUE."));
  CHECK_FALSE(says_continue("DISCONTINUED"));
  CHECK_FALSE(says_continue("continue"));
}

TEST_CASE("route: a single eligible agent needs no LLM") {
  Harness h(kGraph, json::array());
  Sop sop(h.config);
  json cfg = json::parse(kGraph);
  cfg["sop"]["initial_state"] = "b";
  Harness hb(cfg.dump(), json::array());
  Sop sb(hb.config);
  RouteDecision r = sb.route(hb.env, hb.ctl());
  CHECK(r.agent == "y");
  CHECK(r.via == "single");
  CHECK(hb.gateway.count_calls() == 0);
}

TEST_CASE("route: LLM choice, retry, then round-robin fallback") {
  SUBCASE("valid first reply") {
    Harness h(kGraph, json::array({"<next_agent>y</next_agent>"}));
    Sop sop(h.config);
    CHECK(sop.route(h.env, h.ctl()).agent == "y");
  }
  SUBCASE("one retry") {
    Harness h(kGraph, json::array({"<next_agent>z</next_agent>", "<next_agent>y</next_agent>"}));
    Sop sop(h.config);
    RouteDecision r = sop.route(h.env, h.ctl());
    CHECK(r.agent == "y");
    CHECK(r.via == "llm");
    CHECK(h.gateway.count_calls("route") == 2);
    CHECK(h.of(EventKind::Warning).empty());
  }
  SUBCASE("fallback after two bad replies") {
    Harness h(kGraph, json::array({"nonsense", "more nonsense"}));
    Sop sop(h.config);
    RouteDecision r = sop.route(h.env, h.ctl());
    CHECK(r.agent == "x");
    CHECK(r.via == "fallback");
    auto w = h.of(EventKind::Warning);
    REQUIRE(w.size() == 1);
    CHECK(w[0].payload["code"] == "INVALID_ROUTE");
  }
  SUBCASE("provider failure falls back too") {
    Harness h(kGraph, json::array());
    h.config.llm.provider = Provider::mock;
    Gateway broken;
    ControllerEnv ctl{broken, h.config.llm, h.sink};
    Sop sop(h.config);
    CHECK(sop.route(h.env, ctl).via == "fallback");
    CHECK(h.of(EventKind::Warning).at(0).payload["code"] == "CONTROLLER_PROVIDER_ERROR");
  }
}

TEST_CASE("round-robin fallback follows the previous actor") {
  Harness h(kGraph, json::array({"<next_agent>x</next_agent>", "CONTINUE", "?", "?"}));
  Sop sop(h.config);
  CHECK(sop.next(h.env, h.ctl()).agent == "x");
  h.act("x", "a");
  CHECK(sop.next(h.env, h.ctl()).agent == "y");
}

TEST_CASE("transit rules") {
  SUBCASE("no transitions means stay without a call") {
    json cfg = json::parse(kGraph);
    cfg["sop"]["states"]["a"]["transitions"] = json::array();
    cfg["sop"]["states"]["c"]["transitions"] = json::array();
    cfg["sop"]["states"]["b"].erase("terminal");
    cfg["sop"]["states"]["b"]["transitions"] = json::array();
    Harness h(cfg.dump(), json::array());
    Sop sop(h.config);
    CHECK(sop.transit(h.env, h.ctl()).kind == TransitDecision::Kind::stay);
    CHECK(h.gateway.count_calls() == 0);
  }
  SUBCASE("LLM move and CONTINUE") {
    Harness h(kGraph, json::array({"<next_state>c</next_state>", "CONTINUE"}));
    Sop sop(h.config);
    TransitDecision d = sop.transit(h.env, h.ctl());
    CHECK(d == TransitDecision{TransitDecision::Kind::move, "c"});
    CHECK(sop.transit(h.env, h.ctl()).kind == TransitDecision::Kind::stay);
    auto t = h.of(EventKind::TransitDecided);
    REQUIRE(t.size() == 2);
    CHECK(t[0].payload["via"] == "llm");
    CHECK(t[0].payload["target"] == "c");
  }
  SUBCASE("undeclared target is retried, then stay") {
    Harness h(kGraph, json::array({"<next_state>nowhere</next_state>", "<next_state>a</next_state>"}));
    Sop sop(h.config);
    TransitDecision d = sop.transit(h.env, h.ctl());
    CHECK(d.kind == TransitDecision::Kind::stay);
    CHECK(h.gateway.count_calls("transit") == 2);
    CHECK(h.of(EventKind::Warning).at(0).payload["code"] == "INVALID_TRANSIT");
    CHECK(h.of(EventKind::TransitDecided).at(0).payload["via"] == "fallback");
  }
}

TEST_CASE("forced moves and terminal states") {
  // c has max_turns 2 and the single transition b; b is terminal.
  json cfg = json::parse(kGraph);
  cfg["sop"]["initial_state"] = "c";
  Harness h(cfg.dump(), json::array({"CONTINUE"}));
  Sop sop(h.config);

  NextResult n1 = sop.next(h.env, h.ctl());  // first turn: no transit
  CHECK(n1.agent == "x");
  CHECK(h.gateway.count_calls() == 0);
  h.act("x", "c");
  NextResult n2 = sop.next(h.env, h.ctl());  // transit via LLM: CONTINUE
  CHECK(n2.state->name == "c");
  CHECK(h.gateway.count_calls("transit") == 1);
  h.act("x", "c");
  NextResult n3 = sop.next(h.env, h.ctl());  // limit reached, single candidate: rule move
  CHECK(n3.state->name == "b");
  CHECK(h.gateway.count_calls() == 1);
  auto moves = h.of(EventKind::TransitDecided);
  CHECK(moves.back().payload["via"] == "rule");
  CHECK(moves.back().payload["forced"] == true);
  h.act("y", "b");
  NextResult n4 = sop.next(h.env, h.ctl());  // terminal with max_turns 1: finish
  CHECK(n4.finished);
  CHECK(n4.finish_reason == "terminal_state");
  CHECK(h.gateway.count_calls() == 1);
  CHECK(sop.step_count() == 3);
  CHECK_THROWS_AS(sop.next(h.env, h.ctl()), Error);
}

TEST_CASE("forced choice among several candidates falls back to the first") {
  json cfg = json::parse(kGraph);
  cfg["sop"]["states"]["a"]["max_turns"] = 1;
  Harness h(cfg.dump(), json::array({"<next_agent>x</next_agent>", "CONTINUE", "CONTINUE"}));
  Sop sop(h.config);
  sop.next(h.env, h.ctl());
  h.act("x", "a");
  NextResult n = sop.next(h.env, h.ctl());
  CHECK(n.state->name == "b");
  CHECK(h.of(EventKind::Warning).at(0).payload["code"] == "INVALID_TRANSIT");
  auto t = h.of(EventKind::TransitDecided).back();
  CHECK(t.payload["via"] == "fallback");
  CHECK(t.payload["target"] == "b");
}

TEST_CASE("max_steps ends the run before routing") {
  json cfg = json::parse(kGraph);
  cfg["sop"]["max_steps"] = 1;
  cfg["sop"]["initial_state"] = "c";
  Harness h(cfg.dump(), json::array());
  Sop sop(h.config);
  sop.next(h.env, h.ctl());
  h.act("x", "c");
  NextResult n = sop.next(h.env, h.ctl());
  CHECK(n.finished);
  CHECK(n.finish_reason == "max_steps");
}

TEST_CASE("next emits StateEntered and AgentSelected") {
  Harness h(kGraph, json::array({"<next_agent>y</next_agent>", "<next_state>b</next_state>"}));
  Sop sop(h.config);
  sop.next(h.env, h.ctl());
  h.act("y", "a");
  sop.next(h.env, h.ctl());
  auto entered = h.of(EventKind::StateEntered);
  REQUIRE(entered.size() == 1);
  CHECK(entered[0].payload == json{{"state", "b"}, {"from", "a"}});
  auto sel = h.of(EventKind::AgentSelected);
  REQUIRE(sel.size() == 2);
  CHECK(sel[1].payload == json{{"agent", "y"}, {"state", "b"}, {"step", 2}, {"via", "single"}});
  // transit precedes the StateEntered it causes
  CHECK(h.of(EventKind::TransitDecided)[0].seq < entered[0].seq);
}

TEST_CASE("wildcard components merge per slot") {
  StateSpec spec;
  spec.agents = {"x", "y"};
  ComponentSpec task{ComponentKind::prompt, PromptPart::task, "shared task"};
  ComponentSpec rules{ComponentKind::prompt, PromptPart::rules, "shared rules"};
  ComponentSpec own{ComponentKind::prompt, PromptPart::task, "x task"};
  ComponentSpec tool;
  tool.kind = ComponentKind::tool;
  tool.tool = "echo";
  spec.components["*"] = {task, rules, tool};
  spec.components["x"] = {own};
  State s = resolve_state("st", spec);
  const auto& x = s.components_for("x");
  REQUIRE(x.size() == 3);
  CHECK(x[0].text == "shared rules");
  CHECK(x[1].tool == "echo");
  CHECK(x[2].text == "x task");
  CHECK(s.components_for("y").size() == 3);
  CHECK(s.task_text("x") == "x task");
  CHECK(s.task_text("y") == "shared task");
  CHECK(s.components_for("nobody").empty());
}

TEST_CASE("assemble_prompt orders parts and declares function tools") {
  ToolRegistry tools = builtin_tools({});
  StateSpec spec;
  spec.agents = {"x"};
  ComponentSpec fmt{ComponentKind::prompt, PromptPart::output_format, "Be brief."};
  ComponentSpec task{ComponentKind::prompt, PromptPart::task, "Do the thing."};
  ComponentSpec fn;
  fn.kind = ComponentKind::tool;
  fn.tool = "echo";
  fn.mode = ToolMode::function_call;
  spec.components["x"] = {fmt, task, fn, fn};
  State s = resolve_state("st", spec);
  AgentSpec agent{"You are X.", false, {}, std::nullopt};
  Observation obs;
  obs.current_state_name = "st";
  ToolResult pre;
  pre.tool_name = "web_search";
  pre.content = "result text";
  ChatRequest r = assemble_prompt(s, "x", agent, obs, {pre}, &tools, LlmProfile{});
  REQUIRE(r.messages.size() == 2);
  CHECK(r.messages[0].content == "You are X.");
  const std::string& u = r.messages[1].content;
  CHECK(u.find("## Task") < u.find("## Output format"));
  CHECK(u.find("## Output format") < u.find("## Tool results"));
  CHECK(u.find("result text") != std::string::npos);
  CHECK(u.find("## Current state: st") != std::string::npos);
  REQUIRE(r.functions.size() == 1);
  CHECK(r.functions[0].name == "echo");
}

TEST_CASE("add_states is all-or-nothing") {
  Harness h(kGraph, json::array());
  Sop sop(h.config);
  StateSpec extra;
  extra.agents = {"x"};
  extra.transitions = {"b"};

  SUBCASE("valid patch") {
    sop.add_states({{"d", extra}}, {{"a", "d"}});
    REQUIRE(sop.states().contains("d"));
    const auto& t = sop.state("a").transitions;
    CHECK(std::find(t.begin(), t.end(), "d") != t.end());
  }
  SUBCASE("duplicate state") {
    try {
      sop.add_states({{"d", extra}, {"b", extra}}, {});
      FAIL("expected SopPatchError");
    } catch (const SopPatchError& e) {
      CHECK(e.code() == "DUPLICATE_STATE");
    }
    CHECK_FALSE(sop.states().contains("d"));
  }
  SUBCASE("dangling edge") {
    try {
      sop.add_states({{"d", extra}}, {{"a", "zzz"}});
      FAIL("expected SopPatchError");
    } catch (const SopPatchError& e) {
      CHECK(e.code() == "DANGLING_REFERENCE");
    }
    CHECK_FALSE(sop.states().contains("d"));
  }
  SUBCASE("state naming an unknown agent") {
    StateSpec bad = extra;
    bad.agents = {"ghost"};
    CHECK_THROWS_AS(sop.add_states({{"d", bad}}, {}), SopPatchError);
    CHECK(sop.states().size() == 3);
  }
  SUBCASE("dangling transition inside a new state") {
    StateSpec bad = extra;
    bad.transitions = {"nowhere"};
    try {
      sop.add_states({{"d", bad}}, {});
      FAIL("expected SopPatchError");
    } catch (const SopPatchError& e) {
      CHECK(e.code() == "DANGLING_REFERENCE");
    }
  }
}

TEST_CASE("unknown initial state is rejected at construction") {
  SystemConfig c = parse_config(kGraph);
  c.sop.initial_state = "zz";
  CHECK_THROWS_AS(Sop{c}, ConfigError);
}

TEST_CASE("adversarial controllers never break the SOP guarantees") {
  std::mt19937_64 rng(2024);
  ToolRegistry tools = builtin_tools({});
  std::map<std::string, int> via;
  for (int i = 0; i < 60; ++i) {
    CAPTURE(i);
    auto bad = testing::run_adversarial(rng, tools, &via);
    if (!bad.empty()) FAIL(bad.front());
  }
  // every decision path was exercised
  for (const char* k : {"route:llm", "route:fallback", "route:single", "transit:llm", "transit:fallback", "transit:rule"}) {
    CAPTURE(k);
    CHECK(via[k] > 0);
  }
}
