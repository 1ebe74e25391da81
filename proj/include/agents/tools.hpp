#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agents/config.hpp"
#include "agents/llm.hpp"

namespace agents {

struct ToolResult {
  std::string tool_name;
  bool ok = true;
  std::string content;
  std::optional<std::string> error;
  long latency_ms = 0;

  static ToolResult failure(std::string tool, std::string message) {
    ToolResult r;
    r.tool_name = std::move(tool);
    r.ok = false;
    r.error = std::move(message);
    return r;
  }
};

struct ToolDef {
  FunctionDecl decl;
  std::set<ToolMode> modes = {ToolMode::prepend, ToolMode::function_call};
  std::function<ToolResult(const nlohmann::json& params)> run;
  size_t max_chars = 4000;
};

// Immutable once built; invoke() may be called from any thread.
class ToolRegistry {
 public:
  void add(ToolDef def);
  const ToolDef* find(std::string_view name) const;
  std::vector<std::string> names() const;

  // Never throws: unknown tools, bad params and tool failures all come back
  // as ok=false results. Content is sanitized and bounded.
  ToolResult invoke(const std::string& name, const nlohmann::json& params) const;

 private:
  std::map<std::string, ToolDef, std::less<>> tools_;
};

struct ToolOptions {
  std::string search_backend;  // AGENTS_SEARCH_BACKEND
  std::chrono::milliseconds http_timeout{10000};  // AGENTS_HTTP_TIMEOUT_MS
  std::string kb_root = "kb";  // AGENTS_KB_ROOT; one subdirectory per knowledge base
  LlmProfile embed_profile = [] {
    LlmProfile p;
    p.provider = Provider::mock;
    return p;
  }();

  static ToolOptions from_env();
};

struct KbChunk {
  std::string source;
  std::string text;
  Embedding embedding;
};

struct KbHit {
  size_t index;
  std::string source;
  std::string text;
  double similarity;
};

class KnowledgeBase {
 public:
  using Embedder = std::function<std::vector<Embedding>(const std::vector<std::string>&)>;

  // Loads *.txt and *.md under dir (sorted by filename), chunked and embedded.
  static KnowledgeBase load(const std::string& dir, const Embedder& embed);
  static KnowledgeBase from_chunks(std::vector<KbChunk> chunks, Embedder embed);

  std::vector<KbHit> query(const std::string& q, size_t k) const;
  const std::vector<KbChunk>& chunks() const { return chunks_; }

 private:
  std::vector<KbChunk> chunks_;
  Embedder embed_;
};

// Paragraph-packed chunks of roughly target characters; long paragraphs are
// split on word boundaries.
std::vector<std::string> chunk_text(const std::string& text, size_t target = 500);

std::string html_to_text(const std::string& html);

// Strips control characters (keeping newline and tab) and bounds the length,
// ending with a truncation marker when cut.
std::string bound_content(const std::string& text, size_t max_chars);

inline constexpr std::string_view kTruncationMarker = " [truncated]";

ToolResult web_search(const ToolOptions& options, const std::string& q, int top_n = 3);
ToolResult web_fetch(const ToolOptions& options, const std::string& url, size_t max_chars = 4000);

// echo (test-only), web_search, web_fetch, and knowledge_base_query over
// every directory under options.kb_root.
ToolRegistry builtin_tools(const ToolOptions& options);

}  // namespace agents
