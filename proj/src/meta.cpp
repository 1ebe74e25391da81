#include "agents/meta.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <regex>
#include <sstream>

#include "agents/meta_resource.hpp"
#include "agents/runtime.hpp"
#include "agents/util.hpp"

namespace agents {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kStages[] = {"plan_agents", "plan_states", "write_components"};

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

std::string render_exemplars(const ExemplarLibrary& library, const std::vector<Ranked>& hits) {
  if (hits.empty()) return "(no exemplars available)";
  std::ostringstream out;
  out << "Configs written for similar tasks:\n";
  for (const auto& h : hits) {
    const Exemplar& ex = library.exemplars[h.index];
    out << "\n### " << ex.task_description << " (similarity " << std::fixed << std::setprecision(4) << h.similarity
        << ")\n```json\n"
        << canonicalize(ex.config) << "```\n";
  }
  return out.str();
}

ValidationIssue stage_issue(const std::string& path, const std::string& message) {
  return {path, "STAGE_OUTPUT_INVALID", message};
}

// Folds the three stage outputs into one config document.
json merge_stages(const std::string& task, const std::string drafts[3], std::vector<ValidationIssue>& issues) {
  json doc = {{"version", 1}, {"description", task}};
  auto block = [&](int i) -> json {
    auto b = extract_json_block(drafts[i]);
    if (!b || !b->is_object()) {
      issues.push_back(stage_issue(kStages[i], "stage output has no ```json object block"));
      return json::object();
    }
    return *b;
  };
  size_t before = issues.size();
  json agents_doc = block(0);
  if (agents_doc.contains("agents")) doc["agents"] = agents_doc["agents"];
  else if (issues.size() == before) issues.push_back(stage_issue(kStages[0], "stage output lacks \"agents\""));
  if (agents_doc.contains("llm")) doc["llm"] = agents_doc["llm"];

  before = issues.size();
  json states_doc = block(1);
  if (states_doc.contains("sop")) doc["sop"] = states_doc["sop"];
  else if (issues.size() == before) issues.push_back(stage_issue(kStages[1], "stage output lacks \"sop\""));
  if (states_doc.contains("environment")) doc["environment"] = states_doc["environment"];

  before = issues.size();
  json comp_doc = block(2);
  if (!comp_doc.contains("components") || !comp_doc["components"].is_object()) {
    if (issues.size() == before) issues.push_back(stage_issue(kStages[2], "stage output lacks \"components\""));
    return doc;
  }
  for (const auto& [state, comps] : comp_doc["components"].items()) {
    if (!doc.contains("sop") || !doc["sop"].is_object() || !doc["sop"].contains("states") ||
        !doc["sop"]["states"].is_object() || !doc["sop"]["states"].contains(state)) {
      issues.push_back({"components." + state, "REFERENCE_ERROR", "components given for undeclared state '" + state + "'"});
      continue;
    }
    json& target = doc["sop"]["states"][state];
    if (target.is_object()) target["components"] = comps;
  }
  return doc;
}

std::vector<ValidationIssue> check_candidate(const json& doc, const ToolRegistry* tools, SystemConfig& out) {
  try {
    out = config_from_json(doc);
  } catch (const ConfigError& e) {
    return {{e.path(), e.code(), e.what()}};
  }
  ValidationReport report = validate(out, tools);
  return report.errors;
}

ChatRequest repair_request(const std::string& task, const json& doc, const std::vector<ValidationIssue>& errors,
                           const LlmProfile& profile) {
  std::ostringstream user;
  user << "## Task\n" << task << "\n\n## Candidate config\n```json\n" << doc.dump(2) << "\n```\n\n## Validation errors\n";
  for (const auto& e : errors) user << "- " << e.path << " [" << e.code << "]: " << e.message << "\n";
  user << "\nReply with the complete corrected config as one ```json block.";
  ChatRequest req;
  req.temperature = profile.temperature;
  req.max_output_tokens = profile.max_output_tokens;
  req.messages.push_back({Role::system, "You repair configuration files for multi-agent systems so that they pass validation."});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

}  // namespace

json to_json(const GenerationTrace& t) {
  json retrieved = json::array();
  for (const auto& [desc, sim] : t.retrieved_exemplars) retrieved.push_back({{"task_description", desc}, {"similarity", sim}});
  json errors = json::array();
  for (const auto& e : t.last_errors) errors.push_back({{"path", e.path}, {"code", e.code}, {"message", e.message}});
  return {{"agents_draft", t.agents_draft},
          {"states_draft", t.states_draft},
          {"components_draft", t.components_draft},
          {"retrieved_exemplars", retrieved},
          {"validation_attempts", t.validation_attempts},
          {"repair_drafts", t.repair_drafts},
          {"last_errors", errors}};
}

SystemConfig meta_sop_config() { return parse_config(kMetaConfigJson); }

std::optional<json> extract_json_block(const std::string& text) {
  static const std::regex fence("```json[^\\n]*\\n([\\s\\S]*?)```");
  std::optional<json> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), fence); it != std::sregex_iterator(); ++it) {
    json doc = json::parse((*it)[1].str(), nullptr, false);
    if (!doc.is_discarded()) last = std::move(doc);
  }
  return last;
}

std::vector<std::string> list_exemplar_files(const std::string& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ExemplarLibrary build_library(const std::vector<std::string>& paths, Gateway& gateway, const LlmProfile& profile,
                              const ToolRegistry* tools) {
  ExemplarLibrary lib;
  for (const auto& path : paths) {
    try {
      json doc = json::parse(read_file(path));
      if (!doc.is_object() || !doc.contains("description") || !doc["description"].is_string() ||
          doc["description"].get<std::string>().empty()) {
        lib.warnings.push_back(path + ": exemplar needs a non-empty \"description\"");
        continue;
      }
      SystemConfig config = config_from_json(doc);
      ValidationReport report = validate(config, tools);
      if (!report.ok) {
        const auto& e = report.errors.front();
        lib.warnings.push_back(path + ": " + e.path + ": " + e.message);
        continue;
      }
      lib.exemplars.push_back({config.description, std::move(config), {}, path});
    } catch (const std::exception& e) {
      lib.warnings.push_back(path + ": " + e.what());
    }
  }
  if (lib.exemplars.empty()) return lib;
  std::vector<std::string> texts;
  for (const auto& ex : lib.exemplars) texts.push_back(ex.task_description);
  std::vector<Embedding> vecs = gateway.embed(profile, texts, {"exemplar", "", ""});
  for (size_t i = 0; i < vecs.size(); ++i) lib.exemplars[i].embedding = std::move(vecs[i].values);
  return lib;
}

GenerationResult generate_config(const std::string& task, const ExemplarLibrary& library, Gateway& gateway,
                                 const LlmProfile& profile, const ToolRegistry* tools) {
  if (task.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidArgument("task description is empty");
  GenerationTrace trace;

  std::vector<Ranked> hits;
  if (!library.empty()) {
    std::vector<double> q = gateway.embed(profile, {task}, {"meta_retrieve", "", ""}).front().values;
    std::vector<const std::vector<double>*> vecs;
    for (const auto& ex : library.exemplars) vecs.push_back(&ex.embedding);
    hits = rank_by_cosine(q, vecs, kMetaExemplars);
    for (const auto& h : hits)
      trace.retrieved_exemplars.emplace_back(library.exemplars[h.index].task_description, h.similarity);
  }
  const std::string exemplars = render_exemplars(library, hits);

  SystemConfig meta = meta_sop_config();
  meta.llm = profile;
  for (auto& [_, state] : meta.sop.states) {
    for (auto& [__, comps] : state.components) {
      for (auto& c : comps) c.text = replace_all(replace_all(c.text, "{{task}}", task), "{{exemplars}}", exemplars);
    }
  }

  ToolRegistry no_tools;
  SessionOptions opts;
  opts.shared_gateway = &gateway;
  Session session(meta, no_tools, std::move(opts));
  session.run();
  const auto& history = session.environment().history();
  std::string drafts[3];
  for (size_t i = 0; i < history.size() && i < 3; ++i) drafts[i] = history[i].content;
  trace.agents_draft = drafts[0];
  trace.states_draft = drafts[1];
  trace.components_draft = drafts[2];
  if (session.status() != SessionStatus::finished || history.size() != 3) {
    std::string why = "meta pipeline did not complete its three stages";
    auto events = session.events().all();
    if (!events.empty() && events.back().kind == EventKind::SessionFailed)
      why += ": " + events.back().payload.value("message", std::string());
    throw GenerationFailed(why, trace);
  }

  std::vector<ValidationIssue> errors;
  json doc = merge_stages(task, drafts, errors);
  SystemConfig candidate;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) errors.clear();
    if (errors.empty()) errors = check_candidate(doc, tools, candidate);
    trace.validation_attempts = attempt + 1;
    trace.last_errors = errors;
    if (errors.empty()) return {std::move(candidate), std::move(trace)};
    if (attempt == kMetaRepairs) break;

    ChatResponse reply = gateway.complete(profile, repair_request(task, doc, errors, profile), {"meta_repair", "", ""});
    std::string text = reply.text.value_or("");
    trace.repair_drafts.push_back(text);
    // without a usable block the old candidate is checked again
    if (auto fixed = extract_json_block(text); fixed && fixed->is_object()) doc = std::move(*fixed);
  }
  const ValidationIssue& first = trace.last_errors.front();
  std::string message = "generated config still invalid after " + std::to_string(kMetaRepairs) +
                        " repairs: " + first.path + ": " + first.message;
  throw GenerationFailed(message, std::move(trace));
}

}  // namespace agents
