#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace agents {

class ToolRegistry;

enum class Provider { openai_compatible, mock };

struct LlmProfile {
  Provider provider = Provider::openai_compatible;
  std::string model = "gpt-4o-mini";
  double temperature = 0.0;
  std::string api_base = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_output_tokens = 1024;
  std::string embedding_model = "text-embedding-3-small";
  // Dimension of the hash embedder; real providers report their own.
  int embedding_dim = 256;
  // null, a path to a script file, or an inline array of script entries.
  nlohmann::json mock_script;

  bool operator==(const LlmProfile&) const = default;
};

struct MemoryFlags {
  bool long_term = false;
  bool short_term = false;

  bool operator==(const MemoryFlags&) const = default;
};

struct AgentSpec {
  std::string role;
  bool is_human = false;
  MemoryFlags memory;
  std::optional<LlmProfile> llm;

  bool operator==(const AgentSpec&) const = default;
};

enum class ComponentKind { prompt, tool };
enum class PromptPart { task, rules, demonstrations, output_format, custom };
enum class ToolMode { prepend, function_call };

struct ComponentSpec {
  ComponentKind kind = ComponentKind::prompt;
  // prompt components
  PromptPart part = PromptPart::task;
  std::string text;
  // tool components
  std::string tool;
  nlohmann::json params = nlohmann::json::object();
  ToolMode mode = ToolMode::prepend;

  bool operator==(const ComponentSpec&) const = default;
};

struct StateSpec {
  std::string description;
  std::vector<std::string> agents;
  bool terminal = false;
  std::vector<std::string> transitions;
  std::optional<int> max_turns;
  // Keyed by agent name, or "*" for every agent in the state.
  std::map<std::string, std::vector<ComponentSpec>> components;

  bool operator==(const StateSpec&) const = default;
};

struct ControllerSpec {
  std::string transit_instruction =
      "You moderate a multi-agent workflow. Decide whether the work should stay in the "
      "current state or move on to one of the candidate states.";
  std::string route_instruction =
      "You moderate a multi-agent workflow. Decide which agent should act next.";

  bool operator==(const ControllerSpec&) const = default;
};

struct SopSpec {
  std::string initial_state;
  ControllerSpec controller;
  std::map<std::string, StateSpec> states;
  int max_steps = 100;
  bool dynamic_planning = false;

  bool operator==(const SopSpec&) const = default;
};

struct EnvSpec {
  int window = 10;
  int memory_top_k = 3;
  // agent -> states whose actions it may see. Agents absent from the map,
  // or an empty map ("public"), see everything.
  std::map<std::string, std::vector<std::string>> visibility;
  bool human_memory = false;
  std::optional<int> human_timeout_ms;

  bool operator==(const EnvSpec&) const = default;
};

struct SystemConfig {
  int version = 1;
  std::string description;
  LlmProfile llm;
  std::map<std::string, AgentSpec> agents;
  SopSpec sop;
  EnvSpec environment;

  bool operator==(const SystemConfig&) const = default;
};

struct ValidationIssue {
  std::string path;
  std::string code;
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
};

std::string to_string(Provider p);
std::string to_string(PromptPart p);
std::string to_string(ToolMode m);

bool is_valid_name(std::string_view name);

// Structural decoding. Throws ConfigError (syntax or schema) on the first
// problem; use validate_document() to collect all of them.
SystemConfig config_from_json(const nlohmann::json& doc);

// Structural decoding plus reference checks (states, agents). Tool names are
// not checked here since no registry is involved.
SystemConfig parse_config(std::string_view source);
SystemConfig load_config_file(const std::string& path);

// Every semantic violation in one pass. A null registry skips tool checks.
ValidationReport validate(const SystemConfig& config, const ToolRegistry* tools);
inline ValidationReport validate(const SystemConfig& config, const ToolRegistry& tools) {
  return validate(config, &tools);
}

// Syntax, schema and semantic problems of a raw document in one report.
ValidationReport validate_document(std::string_view source, const ToolRegistry* tools);

nlohmann::json to_json(const SystemConfig& config);
nlohmann::json to_json(const LlmProfile& profile);
nlohmann::json to_json(const StateSpec& state);
nlohmann::json to_json(const ValidationReport& report);
LlmProfile profile_from_json(const nlohmann::json& doc);
StateSpec state_from_json(const nlohmann::json& doc, const std::string& path);

// Sorted keys, two-space indent, UTF-8, trailing newline.
std::string canonicalize(const SystemConfig& config);

// Makes relative mock_script paths absolute against base_dir.
void resolve_paths(SystemConfig& config, const std::string& base_dir);

}  // namespace agents
