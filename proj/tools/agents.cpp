#include <csignal>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "agents/config.hpp"
#include "agents/environment.hpp"
#include "agents/error.hpp"
#include "agents/events.hpp"
#include "agents/meta.hpp"
#include "agents/runtime.hpp"
#include "agents/service.hpp"
#include "agents/tools.hpp"
#include "agents/util.hpp"

namespace fs = std::filesystem;
using namespace agents;
using nlohmann::json;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;
volatile std::sig_atomic_t g_waiting = 0;

void on_sigint(int) {
  if (!g_waiting) std::_Exit(130);
  g_interrupted = 1;
}

void install_sigint() {
  struct sigaction sa {};
  sa.sa_handler = on_sigint;
  sigemptyset(&sa.sa_mask);
  sa.sa_flags = 0;  // no SA_RESTART: a blocked read returns early
  sigaction(SIGINT, &sa, nullptr);
}

void print_report(const ValidationReport& r, std::ostream& out) {
  for (const auto& e : r.errors) out << "error " << e.code << " at " << e.path << ": " << e.message << "\n";
  for (const auto& w : r.warnings) out << "warning " << w.code << " at " << w.path << ": " << w.message << "\n";
  out << (r.ok ? "ok" : "invalid") << " (" << r.errors.size() << " errors, " << r.warnings.size() << " warnings)\n";
}

ToolOptions tool_options_for(const fs::path& config_dir) {
  ToolOptions t = ToolOptions::from_env();
  if (!std::getenv("AGENTS_KB_ROOT")) t.kb_root = (config_dir / "kb").string();
  return t;
}

void print_event(const SessionEvent& e, bool verbose) {
  const json& p = e.payload;
  auto str = [&](const char* k) { return p.contains(k) && p[k].is_string() ? p[k].get<std::string>() : std::string(); };
  switch (e.kind) {
    case EventKind::SessionStarted:
      std::cout << "session started in state " << str("initial_state") << "\n";
      break;
    case EventKind::StateEntered:
      if (p["from"].is_string()) std::cout << "== " << str("state") << " (from " << str("from") << ")\n";
      else std::cout << "== " << str("state") << "\n";
      break;
    case EventKind::AgentSelected:
      if (verbose)
        std::cout << "-> " << str("agent") << " (step " << p.value("step", 0) << ", " << str("via") << ")\n";
      break;
    case EventKind::ActionEmitted: {
      std::cout << "\n[" << p.value("turn_index", 0) << "] " << str("agent") << " @ " << str("state")
                << (p.value("is_human_supplied", false) ? " (human)" : "") << "\n";
      std::string content = str("content");
      std::istringstream lines(content);
      for (std::string line; std::getline(lines, line);) std::cout << "    " << line << "\n";
      std::cout << "\n";
      break;
    }
    case EventKind::ToolInvoked:
      std::cout << "   tool " << str("tool") << " (" << str("mode") << ") " << (p.value("ok", false) ? "ok" : "failed")
                << "\n";
      break;
    case EventKind::TransitDecided:
      if (verbose) {
        std::cout << "   transit " << str("decision");
        if (p.contains("target")) std::cout << " -> " << str("target");
        std::cout << " (" << str("via") << ")\n";
      }
      break;
    case EventKind::MemoryUpdated:
      if (verbose) std::cout << "   memory " << str("kind") << " for " << str("agent") << "\n";
      break;
    case EventKind::Warning:
      std::cerr << "warning " << str("code") << ": " << str("message") << "\n";
      break;
    case EventKind::HumanInputRequested:
    case EventKind::HumanInputReceived:
      break;
    case EventKind::SessionFinished:
      std::cout << "session finished (" << str("reason") << ") after " << p.value("steps", 0) << " steps\n";
      break;
    case EventKind::SessionFailed:
      std::cerr << "session failed (" << str("reason") << "): " << str("message") << "\n";
      break;
  }
}

std::deque<std::string> read_inputs_file(const std::string& path) {
  std::deque<std::string> out;
  std::ifstream in(path);
  if (!in) throw Error("cannot open inputs file '" + path + "'");
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Blocks until the session either waits on request_id or has moved past it.
bool wait_for_prompt(const Session& s, int seq, const std::string& request_id) {
  while (true) {
    if (auto p = s.pending_request(); p && p->request_id == request_id) return true;
    if (s.events().size() > static_cast<size_t>(seq) + 1 || s.events().closed()) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

bool prompt_human(Session& s, const HumanInputRequest& req) {
  std::cout << "\n--- your turn as " << req.agent << " in " << req.state << " ---\n"
            << render_observation(req.observation) << "\n"
            << req.agent << "> " << std::flush;
  g_waiting = 1;
  while (true) {
    std::string line;
    if (!std::getline(std::cin, line) || g_interrupted) {
      g_waiting = 0;
      return false;
    }
    SubmitResult r = s.submit_human_input(req.request_id, line);
    if (r == SubmitResult::accepted) break;
    if (r == SubmitResult::empty_content) {
      std::cout << req.agent << "> " << std::flush;
      continue;
    }
    std::cerr << "input rejected: " << to_string(r) << "\n";
    break;
  }
  g_waiting = 0;
  return true;
}

int cmd_run(const std::string& config_path, std::optional<int> max_steps, const std::string& mock,
            const std::string& out_dir, const std::string& session_id, const std::string& inputs, bool verbose) {
  SystemConfig config;
  ToolOptions topts = tool_options_for(fs::path(config_path).parent_path());
  ToolRegistry tools = builtin_tools(topts);
  try {
    std::string source = read_file(config_path);
    ValidationReport report = validate_document(source, &tools);
    if (!mock.empty())
      std::erase_if(report.errors, [](const ValidationIssue& e) { return e.code == "MOCK_SCRIPT_MISSING"; });
    if (!report.errors.empty()) {
      report.ok = false;
      print_report(report, std::cerr);
      return 2;
    }
    config = config_from_json(json::parse(source));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  SessionOptions opts;
  opts.output_dir = out_dir;
  opts.session_id = session_id;
  opts.max_steps = max_steps;
  opts.gateway.base_dir = fs::path(config_path).parent_path().string();
  if (opts.gateway.base_dir.empty()) opts.gateway.base_dir = ".";
  std::unique_ptr<Session> session;
  try {
    if (!mock.empty()) opts.gateway.mock_override = load_mock_script(mock);
    if (!inputs.empty()) opts.human_inputs = read_inputs_file(inputs);
    session = std::make_unique<Session>(config, tools, std::move(opts));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  install_sigint();
  std::thread loop([&] { session->run(); });
  int next = 0;
  bool interrupted = false;
  while (true) {
    session->events().wait_for(next, std::chrono::milliseconds(100));
    for (const auto& e : session->events().read_from(next)) {
      next = e.seq + 1;
      print_event(e, verbose);
      if (e.kind == EventKind::HumanInputRequested && !interrupted) {
        std::string rid = e.payload.value("request_id", std::string());
        if (wait_for_prompt(*session, e.seq, rid)) {
          if (!prompt_human(*session, *session->pending_request())) {
            interrupted = true;
            std::cerr << "\ninterrupted while waiting for human input\n";
            session->cancel("interrupted");
          }
        }
      }
    }
    if (session->events().closed() && next > session->events().last_seq()) break;
  }
  loop.join();
  if (!out_dir.empty()) {
    std::cout << "events: " << session->events_path() << "\n"
              << "transcript: " << session->transcript_path() << "\n";
  }
  if (session->status() == SessionStatus::finished) return 0;
  return interrupted ? 3 : 2;
}

int cmd_validate(const std::string& path) {
  std::string source;
  try {
    source = read_file(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  ToolRegistry tools = builtin_tools(tool_options_for(fs::path(path).parent_path()));
  ValidationReport report = validate_document(source, &tools);
  print_report(report, std::cout);
  return report.ok ? 0 : 1;
}

int cmd_new(const std::string& task, const std::string& exemplars, const std::string& out, bool force,
            const std::string& mock) {
  if (fs::exists(out) && !force) {
    std::cerr << "error: '" << out << "' exists (use --force to overwrite)\n";
    return 1;
  }
  try {
    GatewayOptions g;
    LlmProfile profile;
    if (!mock.empty()) {
      g.mock_override = load_mock_script(mock);
      profile.provider = Provider::mock;
    }
    Gateway gateway(g);
    ToolRegistry tools = builtin_tools(ToolOptions::from_env());
    ExemplarLibrary lib = build_library(list_exemplar_files(exemplars), gateway, profile, &tools);
    for (const auto& w : lib.warnings) std::cerr << "warning: " << w << "\n";
    try {
      GenerationResult r = generate_config(task, lib, gateway, profile, &tools);
      write_file(out, canonicalize(r.config));
      std::cout << "wrote " << out << " (" << r.trace.validation_attempts << " validation attempts)\n";
      return 0;
    } catch (const GenerationFailed& e) {
      std::string trace_path = out + ".trace.json";
      write_file(trace_path, to_json(e.trace()).dump(2) + "\n");
      std::cerr << "error: " << e.what() << "\ntrace: " << trace_path << "\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_serve(int port, const std::string& mock, const std::string& meta_mock, const std::string& exemplars,
              const std::string& base_dir) {
  ServiceOptions o = ServiceOptions::from_env();
  o.port = port;
  o.gateway.base_dir = base_dir;
  try {
    if (!mock.empty()) o.gateway.mock_override = load_mock_script(mock);
    if (!meta_mock.empty()) {
      o.meta_mock = load_mock_script(meta_mock);
      o.meta_profile.provider = Provider::mock;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  o.exemplar_files = list_exemplar_files(exemplars);
  Service service(std::move(o));
  if (!service.bind()) {
    std::cerr << "error: cannot listen on port " << port << "\n";
    return 1;
  }
  std::cout << "listening on http://127.0.0.1:" << service.port() << std::endl;
  service.listen();
  return 0;
}

int cmd_export(const std::string& dir, const std::string& format, const std::string& out) {
  if (format != "md") {
    std::cerr << "error: unsupported format '" << format << "'\n";
    return 1;
  }
  fs::path log = fs::path(dir) / "events.ndjson";
  if (!fs::is_directory(dir) || !fs::exists(log)) {
    std::cerr << "error: no session log at '" << log.string() << "'\n";
    return 1;
  }
  try {
    std::string id = fs::path(dir).lexically_normal().filename().string();
    if (id.empty()) id = fs::path(dir).lexically_normal().parent_path().filename().string();
    std::string md = render_transcript(id, actions_from_events(load_event_log(log.string())));
    std::string target = out.empty() ? (fs::path(dir) / "transcript.md").string() : out;
    write_file(target, md);
    std::cout << "wrote " << target << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run, validate, generate and serve config-driven multi-agent systems."};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Print controller decisions and memory updates");

  auto* run = app.add_subcommand("run", "Run a session in the terminal");
  std::string run_config, run_mock, run_out = ".", run_id, run_inputs;
  std::optional<int> run_max;
  run->add_option("config", run_config, "Config file")->required();
  run->add_option("--max-steps", run_max, "Override sop.max_steps")->check(CLI::PositiveNumber);
  run->add_option("--mock", run_mock, "Mock script (JSON array or NDJSON) for every LLM call");
  run->add_option("--out", run_out, "Output root for sessions/, traces/, transcripts/, memory/");
  run->add_option("--session-id", run_id, "Session id (default: random)");
  run->add_option("--inputs", run_inputs, "File with one pre-queued human input per line");

  auto* val = app.add_subcommand("validate", "Validate a config file");
  std::string val_config;
  val->add_option("config", val_config, "Config file")->required();

  auto* gen = app.add_subcommand("new", "Generate a config from a task description");
  std::string gen_task, gen_exemplars = "exemplars", gen_out = "generated.json", gen_mock;
  bool gen_force = false;
  gen->add_option("task", gen_task, "Task description")->required();
  gen->add_option("--exemplars", gen_exemplars, "Directory of exemplar configs");
  gen->add_option("--out", gen_out, "Where to write the config");
  gen->add_flag("--force", gen_force, "Overwrite an existing output file");
  gen->add_option("--mock", gen_mock, "Mock script for the generation calls");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  int serve_port = kDefaultPort;
  std::string serve_mock, serve_meta_mock, serve_exemplars = "exemplars", serve_base = ".";
  serve->add_option("--port", serve_port, "Port to listen on");
  serve->add_option("--mock", serve_mock, "Mock script used by every session");
  serve->add_option("--meta-mock", serve_meta_mock, "Mock script for POST /v1/generate");
  serve->add_option("--exemplars", serve_exemplars, "Directory of exemplar configs");
  serve->add_option("--base-dir", serve_base, "Directory that relative mock_script paths resolve against");

  auto* exp = app.add_subcommand("export", "Render a session's transcript");
  std::string exp_dir, exp_format = "md", exp_out;
  exp->add_option("session-dir", exp_dir, "Directory holding events.ndjson")->required();
  exp->add_option("--format", exp_format, "Output format (md)");
  exp->add_option("--out", exp_out, "Output file (default: <session-dir>/transcript.md)");

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(run_config, run_max, run_mock, run_out, run_id, run_inputs, verbose);
  if (*val) return cmd_validate(val_config);
  if (*gen) return cmd_new(gen_task, gen_exemplars, gen_out, gen_force, gen_mock);
  if (*serve) return cmd_serve(serve_port, serve_mock, serve_meta_mock, serve_exemplars, serve_base);
  if (*exp) return cmd_export(exp_dir, exp_format, exp_out);
  return 1;
}
