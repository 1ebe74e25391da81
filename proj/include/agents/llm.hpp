#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agents/config.hpp"

namespace agents {

enum class Role { system, user, assistant, tool };

std::string to_string(Role r);

struct FunctionCall {
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();

  bool operator==(const FunctionCall&) const = default;
};

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  // assistant messages that requested a tool, and the tool replies to them
  std::optional<FunctionCall> call;
  std::string call_id;
  std::string name;

  bool operator==(const ChatMessage&) const = default;
};

struct ParamSpec {
  std::string name;
  std::string type = "string";  // string | integer | number | boolean
  bool required = false;
  std::string description;

  bool operator==(const ParamSpec&) const = default;
};

struct FunctionDecl {
  std::string name;
  std::string description;
  std::vector<ParamSpec> parameters;

  bool operator==(const FunctionDecl&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::vector<FunctionDecl> functions;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  enum class Kind { text, function_call };
  Kind kind = Kind::text;
  std::optional<std::string> text;
  std::optional<FunctionCall> call;
  Usage usage;

  static ChatResponse from_text(std::string t) {
    ChatResponse r;
    r.text = std::move(t);
    return r;
  }
  static ChatResponse from_call(FunctionCall c) {
    ChatResponse r;
    r.kind = Kind::function_call;
    r.call = std::move(c);
    return r;
  }

  bool operator==(const ChatResponse&) const = default;
};

struct Embedding {
  std::vector<double> values;
  std::string model;

  bool operator==(const Embedding&) const = default;
};

nlohmann::json to_json(const ChatMessage& m);
nlohmann::json to_json(const ChatRequest& r);
nlohmann::json to_json(const ChatResponse& r);
nlohmann::json to_json(const FunctionDecl& d);
ChatResponse response_from_json(const nlohmann::json& doc, const std::string& path);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct Ranked {
  size_t index;
  double similarity;
};

// Top-min(k, n) candidates by cosine similarity, descending, lower index on ties.
std::vector<Ranked> rank_by_cosine(const std::vector<double>& query, const std::vector<const std::vector<double>*>& candidates,
                                   size_t k);

// Lowercase, split on whitespace, hash each token (FNV-1a) into [0, dim),
// count, L2-normalize. Pure function of the text.
Embedding hash_embedding(const std::string& text, int dim);

// ---------------------------------------------------------------------------
// Mock provider script

struct MockEntry {
  std::optional<std::string> match;
  ChatResponse respond;
};

struct MockScript {
  std::vector<MockEntry> entries;
  std::string embed_mode = "hash-bag-of-words";
};

MockScript mock_script_from_json(const nlohmann::json& doc);
// Accepts either a JSON list or newline-delimited entries.
MockScript parse_mock_script(std::string_view text);
MockScript load_mock_script(const std::string& path);

// Consumes script entries: the first unconsumed entry whose match occurs in
// the prompt wins; otherwise the first unconsumed entry without a match.
class MockCursor {
 public:
  explicit MockCursor(MockScript script);

  ChatResponse next(const ChatRequest& request);
  size_t remaining() const;

 private:
  mutable std::mutex mu_;
  MockScript script_;
  std::vector<bool> used_;
};

// ---------------------------------------------------------------------------
// Real provider

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double factor = 2.0;
};

class OpenAiClient {
 public:
  OpenAiClient(RetryPolicy retry, std::chrono::milliseconds timeout);

  ChatResponse complete(const LlmProfile& profile, const ChatRequest& request) const;
  std::vector<Embedding> embed(const LlmProfile& profile, const std::vector<std::string>& texts) const;

 private:
  nlohmann::json post(const LlmProfile& profile, const std::string& endpoint, const nlohmann::json& body) const;

  RetryPolicy retry_;
  std::chrono::milliseconds timeout_;
};

nlohmann::json chat_payload(const LlmProfile& profile, const ChatRequest& request);
ChatResponse parse_chat_completion(const nlohmann::json& body);

// ---------------------------------------------------------------------------
// Gateway

// Who is calling, for the trace log.
struct CallContext {
  std::string purpose;  // act | transit | route | scratchpad | meta_repair | ...
  std::string agent;
  std::string state;
};

struct TraceRecord {
  int seq = 0;
  std::string kind;  // complete | embed
  CallContext context;
  nlohmann::json detail;
};

struct GatewayOptions {
  // Overrides any mock_script named by profiles (the CLI's --mock flag).
  std::optional<MockScript> mock_override;
  std::string base_dir = ".";
  std::string trace_path;
  RetryPolicy retry;
  std::chrono::milliseconds http_timeout{10000};
};

// One per session: owns the mock cursor and the trace log. Safe to call
// from several threads; trace records are appended atomically.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  ChatResponse complete(const LlmProfile& profile, const ChatRequest& request, const CallContext& context);
  std::vector<Embedding> embed(const LlmProfile& profile, const std::vector<std::string>& texts,
                               const CallContext& context);

  std::vector<TraceRecord> trace() const;
  size_t count_calls(const std::string& purpose = "", const std::string& agent = "") const;

 private:
  bool uses_mock(const LlmProfile& profile) const;
  MockCursor& cursor_for(const LlmProfile& profile);
  void record(TraceRecord rec);

  GatewayOptions options_;
  OpenAiClient client_;
  mutable std::mutex mu_;
  std::unique_ptr<MockCursor> cursor_;
  std::vector<TraceRecord> trace_;
  std::ofstream trace_file_;
  size_t embed_dim_ = 0;
};

// Embedding without a session: the hash embedder for mock profiles, the
// HTTP endpoint otherwise.
std::vector<Embedding> embed_texts(const LlmProfile& profile, const std::vector<std::string>& texts);

}  // namespace agents
