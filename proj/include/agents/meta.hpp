#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "agents/config.hpp"
#include "agents/error.hpp"
#include "agents/llm.hpp"
#include "agents/tools.hpp"

namespace agents {

inline constexpr int kMetaExemplars = 2;
inline constexpr int kMetaRepairs = 2;

struct Exemplar {
  std::string task_description;
  SystemConfig config;
  std::vector<double> embedding;
  std::string source;
};

struct ExemplarLibrary {
  std::vector<Exemplar> exemplars;
  std::vector<std::string> warnings;

  size_t size() const { return exemplars.size(); }
  bool empty() const { return exemplars.empty(); }
};

// Loads and validates each file; files without a "description", or that do
// not parse or validate, are skipped with a warning.
ExemplarLibrary build_library(const std::vector<std::string>& paths, Gateway& gateway, const LlmProfile& profile,
                              const ToolRegistry* tools = nullptr);

// Every *.json file directly under dir, in name order.
std::vector<std::string> list_exemplar_files(const std::string& dir);

struct GenerationTrace {
  std::string agents_draft;
  std::string states_draft;
  std::string components_draft;
  std::vector<std::pair<std::string, double>> retrieved_exemplars;
  int validation_attempts = 0;
  std::vector<std::string> repair_drafts;
  std::vector<ValidationIssue> last_errors;
};

nlohmann::json to_json(const GenerationTrace& t);

class GenerationFailed : public Error {
 public:
  GenerationFailed(const std::string& message, GenerationTrace trace) : Error(message), trace_(std::move(trace)) {}
  const GenerationTrace& trace() const { return trace_; }

 private:
  GenerationTrace trace_;
};

struct GenerationResult {
  SystemConfig config;
  GenerationTrace trace;
};

// The bundled three-stage SOP that drives generation.
SystemConfig meta_sop_config();

// The body of the last ```json fenced block in text, parsed.
std::optional<nlohmann::json> extract_json_block(const std::string& text);

// Agents, then states, then components, each one "act" call by the meta
// SOP; then parse + validate with up to kMetaRepairs "meta_repair" calls.
GenerationResult generate_config(const std::string& task, const ExemplarLibrary& library, Gateway& gateway,
                                 const LlmProfile& profile, const ToolRegistry* tools = nullptr);

}  // namespace agents
