// Acceptance gate: one PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "adversarial.hpp"
#include "agents/meta.hpp"
#include "agents/service.hpp"
#include "golden.hpp"
#include "mutations.hpp"
#include "oracle.hpp"
#include "sse_client.hpp"
#include "support.hpp"

using namespace agents;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned limits.
constexpr double kGoldenSeconds = 5.0;
constexpr double kMemorySeconds = 10.0;
constexpr double kServiceSeconds = 10.0;
constexpr double kSimilarityTolerance = 1e-12;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failure notes; an empty list is a pass.
struct Verdict {
  std::vector<std::string> failures;
  std::string note;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

int g_failed = 0;

void criterion(int n, const std::string& title, const std::function<void(Verdict&)>& body) {
  Verdict v;
  auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.failures.push_back(std::string("exception: ") + e.what());
  }
  double secs = seconds_since(t0);
  bool ok = v.failures.empty();
  if (!ok) ++g_failed;
  std::ostringstream line;
  line << "criterion " << n << " " << (ok ? "PASS" : "FAIL") << ": " << title;
  line.setf(std::ios::fixed);
  line.precision(2);
  line << " (" << secs << " s";
  if (!v.note.empty()) line << "; " << v.note;
  line << ")";
  std::cout << line.str() << "\n";
  for (size_t i = 0; i < v.failures.size() && i < 5; ++i) std::cout << "    " << v.failures[i] << "\n";
  if (v.failures.size() > 5) std::cout << "    ... " << v.failures.size() - 5 << " more\n";
  std::cout.flush();
}

std::vector<SessionEvent> of(const std::vector<SessionEvent>& events, EventKind k) {
  std::vector<SessionEvent> out;
  for (const auto& e : events)
    if (e.kind == k) out.push_back(e);
  return out;
}

void golden_determinism(Verdict& v) {
  ToolRegistry tools = builtin_tools({});
  SessionOptions base;
  base.session_id = "golden";
  base.gateway.base_dir = testing::fixture("");
  base.gateway.mock_override = load_mock_script(testing::fixture("golden/debate.ndjson"));
  SystemConfig config = testing::load_fixture("debate.json");
  auto t0 = Clock::now();
  for (int run = 0; run < 10; ++run) {
    auto s = run_session(config, tools, base);
    std::string diff = testing::debate_mismatch(*s);
    v.expect(diff.empty(), "run " + std::to_string(run) + ": " + diff);
  }
  double secs = seconds_since(t0);
  v.expect(secs < kGoldenSeconds, "10 runs took " + std::to_string(secs) + " s");
  v.note = "10 runs";
}

void loop_contract(Verdict& v) {
  SystemConfig cfg = testing::load_fixture("debate.json");
  auto events = testing::golden_events("golden/debate.events.ndjson");
  std::string transcript = read_file(testing::fixture("golden/debate.transcript.md"));
  size_t turns = 0;
  for (size_t pos = 0; (pos = transcript.find("\n### turn ", pos)) != std::string::npos; ++pos) ++turns;

  int actions = 0;
  std::string current;
  for (const auto& e : events) {
    std::string kind = e["kind"];
    const json& p = e["payload"];
    if (kind == "StateEntered") current = p["state"];
    if (kind == "ActionEmitted") ++actions;
    if (kind == "AgentSelected") {
      const auto& eligible = cfg.sop.states.at(current).agents;
      v.expect(std::find(eligible.begin(), eligible.end(), p["agent"].get<std::string>()) != eligible.end(),
               p["agent"].get<std::string>() + " not eligible in " + current);
      v.expect(p["state"] == current, "AgentSelected names " + p["state"].dump() + " in " + current);
    }
  }
  v.expect(actions == static_cast<int>(turns), std::to_string(actions) + " actions vs " + std::to_string(turns) + " turns");
  v.expect(events.back()["kind"] == "SessionFinished", "log does not end in SessionFinished");
  v.expect(events.back()["payload"]["reason"] == "terminal_state", "finish reason " + events.back()["payload"].dump());
  v.expect(cfg.sop.states.at(current).terminal, "final state " + current + " is not terminal");
  v.note = std::to_string(actions) + " actions";
}

void adversarial(Verdict& v) {
  std::mt19937_64 rng(20231106);
  ToolRegistry tools = builtin_tools({});
  std::map<std::string, int> tally;
  for (int i = 0; i < 200; ++i) {
    for (const auto& b : testing::run_adversarial(rng, tools, &tally)) v.failures.push_back("run " + std::to_string(i) + ": " + b);
  }
  for (const char* k : {"route:llm", "route:fallback", "transit:llm", "transit:fallback"})
    v.expect(tally[k] > 0, std::string("path never exercised: ") + k);
  v.expect(tally["warning:INVALID_ROUTE"] == tally["route:fallback"], "INVALID_ROUTE warnings != route fallbacks");
  v.expect(tally["warning:INVALID_TRANSIT"] == tally["transit:fallback"], "INVALID_TRANSIT warnings != transit fallbacks");
  v.note = "200 runs, " + std::to_string(tally["route:fallback"]) + " route and " +
           std::to_string(tally["transit:fallback"]) + " transit fallbacks";
}

void memory_oracle(Verdict& v) {
  std::mt19937_64 rng(77);
  LlmProfile p;
  p.provider = Provider::mock;
  p.mock_script = json::array();
  p.embedding_dim = 256;
  auto t0 = Clock::now();
  int queries = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Gateway gw;
    LongTermStore s;
    std::vector<std::vector<double>> vecs;
    int n = 100 + static_cast<int>(rng() % 901);
    for (int i = 0; i < n; ++i) {
      std::string text = testing::random_words(rng, 2, 12);
      store(s, "a", "st", text, i, gw, p);
      vecs.push_back(hash_embedding(text, 256).values);
    }
    std::string q = testing::random_words(rng, 1, 5);
    std::vector<double> qv = hash_embedding(q, 256).values;
    for (int k : {1, 3, 10}) {
      ++queries;
      auto got = retrieve(s, q, k, gw, p);
      auto want = testing::brute_top_k(qv, vecs, static_cast<size_t>(k));
      if (got.size() != want.size()) {
        v.failures.push_back("trial " + std::to_string(trial) + " k=" + std::to_string(k) + ": size mismatch");
        continue;
      }
      for (size_t i = 0; i < got.size(); ++i) {
        bool same_id = got[i].record.id == static_cast<int>(want[i].index);
        bool close = std::abs(got[i].similarity - want[i].similarity) <= kSimilarityTolerance;
        if (!same_id || !close)
          v.failures.push_back("trial " + std::to_string(trial) + " k=" + std::to_string(k) + " rank " + std::to_string(i) +
                               ": id " + std::to_string(got[i].record.id) + " vs " + std::to_string(want[i].index));
      }
    }
  }
  double secs = seconds_since(t0);
  v.expect(secs < kMemorySeconds, "took " + std::to_string(secs) + " s");
  v.note = std::to_string(queries) + " queries";
}

void human_in_the_loop(Verdict& v) {
  ToolRegistry tools = builtin_tools({});
  SessionOptions o;
  o.gateway.base_dir = testing::fixture("");
  Session s(testing::load_fixture("human_debate.json"), tools, o);
  std::thread runner([&] { s.run(); });
  std::optional<HumanInputRequest> req;
  for (int i = 0; i < 500 && !req; ++i) {
    req = s.pending_request();
    if (!req) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!req) {
    s.cancel("interrupted");
    runner.join();
    v.failures.push_back("no human input request");
    return;
  }
  // still blocked after a pause
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  v.expect(s.status() == SessionStatus::waiting_for_human, "session did not block");
  v.expect(of(s.events().all(), EventKind::HumanInputRequested).size() == 1, "HumanInputRequested not emitted once");
  v.expect(s.submit_human_input("req-stale", "x") == SubmitResult::stale_request, "stale id not rejected");
  v.expect(s.submit_human_input(req->request_id, "Weekends only.") == SubmitResult::accepted, "matching submit refused");
  v.expect(s.submit_human_input(req->request_id, "twice") == SubmitResult::not_waiting, "duplicate submit not rejected");
  runner.join();
  v.expect(s.status() == SessionStatus::finished, "session did not finish");
  auto received = of(s.events().all(), EventKind::HumanInputReceived);
  v.expect(received.size() == 1, "expected exactly one HumanInputReceived");
  int human_calls = 0;
  for (const auto& r : s.gateway().trace())
    if (r.context.agent == "citizen") ++human_calls;
  v.expect(human_calls == 0, std::to_string(human_calls) + " LLM calls attributed to the human agent");
  const auto& h = s.environment().history();
  v.expect(h.size() == 3 && h[1].content == "Weekends only." && h[1].is_human_supplied, "human action not recorded verbatim");
}

void dynamic_planning(Verdict& v) {
  ToolRegistry tools = builtin_tools({});
  SessionOptions o;
  o.gateway.base_dir = testing::fixture("");
  SystemConfig cfg = testing::load_fixture("fiction_studio.json");
  v.expect(!cfg.sop.states.contains("revise"), "fixture already has revise");
  auto s = run_session(cfg, tools, o);
  auto events = s->events().all();
  int patch_seq = -1, entered_seq = -1;
  for (const auto& e : events) {
    if (e.kind == EventKind::ActionEmitted && e.payload["content"].get<std::string>().find("```sop-patch") != std::string::npos &&
        patch_seq < 0)
      patch_seq = e.seq;
    if (e.kind == EventKind::StateEntered && e.payload["state"] == "revise") entered_seq = e.seq;
  }
  v.expect(patch_seq >= 0, "no action carried a patch");
  v.expect(entered_seq > patch_seq, "revise was not entered after the patch");
  v.expect(s->status() == SessionStatus::finished, "patched run did not finish");

  cfg.llm.mock_script = json::array({"draft", "Rework it.\n```sop-patch\n{\"states\": {\"revise\": [}\n```", "final"});
  auto m = run_session(cfg, tools);
  auto warnings = of(m->events().all(), EventKind::Warning);
  v.expect(warnings.size() == 1 && warnings[0].payload["code"] == "MALFORMED_SOP_PATCH", "no MALFORMED_SOP_PATCH warning");
  std::set<std::string> names;
  for (const auto& [name, st] : m->sop().states()) names.insert(name);
  std::set<std::string> original;
  for (const auto& [name, st] : cfg.sop.states) original.insert(name);
  v.expect(names == original, "graph changed after a malformed patch");
  for (const auto& [name, st] : cfg.sop.states)
    v.expect(m->sop().states().at(name).transitions == st.transitions, "transitions of " + name + " changed");
}

void config_robustness(Verdict& v) {
  for (const char* f : {"debate.json", "human_debate.json", "customer_service.json", "fiction_studio.json", "echo.json", "loop.json"}) {
    SystemConfig c = testing::load_fixture(f);
    std::string once = canonicalize(c);
    v.expect(parse_config(once) == c, std::string(f) + ": parse(canonical) differs");
    v.expect(canonicalize(parse_config(once)) == once, std::string(f) + ": canonical form not a fixed point");
  }
  ToolRegistry tools = builtin_tools({});
  json base = json::parse(read_file(testing::fixture("debate.json")));
  auto mutations = testing::debate_mutations();
  v.expect(mutations.size() == 12, "expected 12 mutations");
  for (const auto& m : mutations) {
    json d = base;
    m.apply(d);
    ValidationReport r = validate_document(d.dump(), &tools);
    bool exact = r.errors.size() == 1 && r.errors[0].code == m.code && r.errors[0].path == m.path;
    std::string got = r.errors.empty() ? "no errors" : r.errors[0].code + " at " + r.errors[0].path;
    v.expect(exact, m.name + ": " + got + " (" + std::to_string(r.errors.size()) + " errors)");
  }
  v.note = "6 fixtures, " + std::to_string(mutations.size()) + " mutations";
}

void meta_pipeline(Verdict& v) {
  ToolRegistry tools = builtin_tools({});
  auto files = list_exemplar_files(testing::fixture("../exemplars"));
  const std::string task = "Hold a debate on whether cities should ban cars from their centres";
  for (auto [script, repairs] : {std::pair{"meta_stages.ndjson", 0}, std::pair{"meta_repair.ndjson", 1}}) {
    LlmProfile p;
    p.provider = Provider::mock;
    p.mock_script = testing::fixture(std::string("golden/") + script);
    Gateway gw;
    ExemplarLibrary lib = build_library(files, gw, p, &tools);
    v.expect(lib.size() == 3, "library size " + std::to_string(lib.size()));
    GenerationResult r = generate_config(task, lib, gw, p, &tools);
    v.expect(validate(r.config, tools).errors.empty(), std::string(script) + ": result has validation errors");
    v.expect(r.trace.validation_attempts == repairs + 1 && r.trace.validation_attempts <= 3,
             std::string(script) + ": " + std::to_string(r.trace.validation_attempts) + " validation attempts");
    int stage = 0, repair = 0;
    for (const auto& rec : gw.trace()) {
      if (rec.kind != "complete") continue;
      if (rec.context.purpose == "act") ++stage;
      else if (rec.context.purpose == "meta_repair") ++repair;
      else v.failures.push_back(std::string(script) + ": unexpected call " + rec.context.purpose);
    }
    v.expect(stage == 3 && repair == repairs,
             std::string(script) + ": " + std::to_string(stage) + " stage + " + std::to_string(repair) + " repair calls");
    v.expect(r.trace.retrieved_exemplars.size() == 2, std::string(script) + ": exemplars not retrieved");
  }
}

void service_round_trip(Verdict& v) {
  testing::TempDir dir("accept-svc");
  ServiceOptions o;
  o.port = 0;
  o.data_dir = dir.str();
  o.gateway.base_dir = testing::fixture("");
  Service svc(o);
  if (!svc.start()) {
    v.failures.push_back("service did not start");
    return;
  }
  auto t0 = Clock::now();
  httplib::Client cli("127.0.0.1", svc.port());
  cli.set_read_timeout(10, 0);
  auto created = cli.Post("/v1/sessions", read_file(testing::fixture("human_debate.json")), "application/json");
  if (!created || created->status != 201) {
    v.failures.push_back("create failed");
    return;
  }
  std::string id = json::parse(created->body)["session_id"];

  // first connection hangs up once input is requested
  std::string request_id;
  testing::SseRead first = testing::read_events(svc.port(), id, 0, -1, [&](const json& e) {
    if (e["kind"] != "HumanInputRequested") return true;
    request_id = e["payload"]["request_id"];
    return false;
  });
  v.expect(!first.closed_by_server, "first stream closed before the input request");
  if (request_id.empty()) {
    v.failures.push_back("no HumanInputRequested on the stream");
    return;
  }
  auto sent = cli.Post("/v1/sessions/" + id + "/input", json{{"request_id", request_id}, {"content", "Yes, on weekends."}}.dump(),
                       "application/json");
  v.expect(sent && sent->status == 202, "input not accepted");
  auto stale = cli.Post("/v1/sessions/" + id + "/input", json{{"request_id", request_id}, {"content", "again"}}.dump(),
                        "application/json");
  v.expect(stale && stale->status == 409, "second submit not rejected with 409");

  int resume = first.events.back()["seq"].get<int>() + 1;
  testing::SseRead rest = testing::read_events(svc.port(), id, resume);
  v.expect(rest.closed_by_server, "stream did not close after the terminal event");

  std::vector<json> seen = first.events;
  seen.insert(seen.end(), rest.events.begin(), rest.events.end());
  std::vector<json> log;
  for (const auto& e : svc.find(id)->events().all()) log.push_back(to_json(e));
  v.expect(seen == log, "streamed events differ from the session log (" + std::to_string(seen.size()) + " vs " +
                            std::to_string(log.size()) + ")");
  for (size_t i = 0; i < seen.size(); ++i)
    if (seen[i]["seq"] != static_cast<int>(i)) {
      v.failures.push_back("gap or duplicate at position " + std::to_string(i));
      break;
    }
  v.expect(!seen.empty() && seen.back()["kind"] == "SessionFinished", "session did not finish");
  bool received = false;
  for (const auto& e : rest.events) received |= e["kind"] == "HumanInputReceived";
  v.expect(received, "HumanInputReceived missing after reconnect");
  auto handle = cli.Get("/v1/sessions/" + id);
  v.expect(handle && json::parse(handle->body)["last_seq"] == seen.back()["seq"], "last_seq disagrees with the stream");
  double secs = seconds_since(t0);
  v.expect(secs < kServiceSeconds, "took " + std::to_string(secs) + " s");
  v.note = std::to_string(first.events.size()) + " events before reconnect, " + std::to_string(rest.events.size()) + " after";
}

}  // namespace

int main() {
  criterion(1, "golden determinism of the debate fixture", golden_determinism);
  criterion(2, "loop contract over the golden log", loop_contract);
  criterion(3, "route/transit soundness under adversarial mocks", adversarial);
  criterion(4, "memory retrieval equals the brute-force oracle", memory_oracle);
  criterion(5, "human-in-the-loop", human_in_the_loop);
  criterion(6, "dynamic planning", dynamic_planning);
  criterion(7, "config robustness", config_robustness);
  criterion(8, "meta pipeline", meta_pipeline);
  criterion(9, "service round trip with reconnect", service_round_trip);
  std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << "\n";
  return g_failed;
}
