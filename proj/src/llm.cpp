#include "agents/llm.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "agents/error.hpp"

namespace agents {

using nlohmann::json;

std::string to_string(Role r) {
  switch (r) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
    case Role::tool:
      return "tool";
  }
  return "user";
}

json to_json(const ChatMessage& m) {
  json j = {{"role", to_string(m.role)}, {"content", m.content}};
  if (m.call) j["call"] = {{"name", m.call->name}, {"arguments", m.call->arguments}};
  if (!m.call_id.empty()) j["call_id"] = m.call_id;
  if (!m.name.empty()) j["name"] = m.name;
  return j;
}

json to_json(const FunctionDecl& d) {
  json params = json::array();
  for (const auto& p : d.parameters)
    params.push_back({{"name", p.name}, {"type", p.type}, {"required", p.required}, {"description", p.description}});
  return {{"name", d.name}, {"description", d.description}, {"parameters", params}};
}

json to_json(const ChatRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages) messages.push_back(to_json(m));
  json j = {{"messages", messages}, {"temperature", r.temperature}, {"max_output_tokens", r.max_output_tokens}};
  if (!r.functions.empty()) {
    json fns = json::array();
    for (const auto& f : r.functions) fns.push_back(to_json(f));
    j["functions"] = fns;
  }
  return j;
}

json to_json(const ChatResponse& r) {
  json j;
  if (r.kind == ChatResponse::Kind::text) {
    j = {{"kind", "text"}, {"text", r.text.value_or("")}};
  } else {
    j = {{"kind", "function_call"}, {"call", {{"name", r.call->name}, {"arguments", r.call->arguments}}}};
  }
  j["usage"] = {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}};
  return j;
}

ChatResponse response_from_json(const json& doc, const std::string& path) {
  auto schema = [&](const std::string& where, const std::string& msg) {
    return ConfigError(ConfigError::Kind::schema, "SCHEMA_ERROR", where, where + ": " + msg);
  };
  if (doc.is_string()) return ChatResponse::from_text(doc.get<std::string>());
  if (!doc.is_object()) throw schema(path, "expected an object");
  std::string kind = doc.value("kind", std::string("text"));
  if (kind == "text") {
    if (!doc.contains("text") || !doc["text"].is_string()) throw schema(path + ".text", "text response needs 'text'");
    return ChatResponse::from_text(doc["text"].get<std::string>());
  }
  if (kind == "function_call") {
    const json* call = doc.contains("call") ? &doc["call"] : nullptr;
    if (!call || !call->is_object()) throw schema(path + ".call", "function_call response needs 'call'");
    if (!call->contains("name") || !(*call)["name"].is_string() || (*call)["name"].get<std::string>().empty())
      throw schema(path + ".call.name", "function_call needs a name");
    FunctionCall fc{(*call)["name"].get<std::string>(), call->value("arguments", json::object())};
    if (!fc.arguments.is_object()) throw schema(path + ".call.arguments", "arguments must be an object");
    return ChatResponse::from_call(std::move(fc));
  }
  throw schema(path + ".kind", "unknown response kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Similarity

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  long double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  double s = static_cast<double>(dot / std::sqrt(na * nb));
  return std::clamp(s, -1.0, 1.0);
}

std::vector<Ranked> rank_by_cosine(const std::vector<double>& query, const std::vector<const std::vector<double>*>& candidates,
                                   size_t k) {
  std::vector<Ranked> all;
  all.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) all.push_back({i, cosine(query, *candidates[i])});
  size_t n = std::min(k, all.size());
  auto before = [](const Ranked& a, const Ranked& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.index < b.index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), before);
  all.resize(n);
  return all;
}

Embedding hash_embedding(const std::string& text, int dim) {
  if (dim < 1) throw InvalidArgument("embedding dimension must be positive");
  Embedding e;
  e.model = "hash-bag-of-words-" + std::to_string(dim);
  e.values.assign(static_cast<size_t>(dim), 0.0);
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : token) {
      h ^= static_cast<unsigned char>(std::tolower(c));
      h *= 1099511628211ULL;
    }
    e.values[h % static_cast<uint64_t>(dim)] += 1.0;
  }
  double norm = 0;
  for (double v : e.values) norm += v * v;
  if (norm > 0) {
    norm = std::sqrt(norm);
    for (double& v : e.values) v /= norm;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Mock script

MockScript mock_script_from_json(const json& doc) {
  if (!doc.is_array())
    throw ConfigError(ConfigError::Kind::schema, "SCHEMA_ERROR", "", "mock script must be a list of entries");
  MockScript s;
  for (size_t i = 0; i < doc.size(); ++i) {
    std::string path = "[" + std::to_string(i) + "]";
    const json& e = doc[i];
    if (e.is_string()) {
      s.entries.push_back({std::nullopt, ChatResponse::from_text(e.get<std::string>())});
      continue;
    }
    if (!e.is_object() || !e.contains("respond"))
      throw ConfigError(ConfigError::Kind::schema, "SCHEMA_ERROR", path, path + ": entry needs 'respond'");
    MockEntry entry;
    if (e.contains("match") && !e["match"].is_null()) {
      if (!e["match"].is_string())
        throw ConfigError(ConfigError::Kind::schema, "SCHEMA_ERROR", path + ".match", path + ".match: expected a string");
      entry.match = e["match"].get<std::string>();
    }
    entry.respond = response_from_json(e["respond"], path + ".respond");
    s.entries.push_back(std::move(entry));
  }
  return s;
}

MockScript parse_mock_script(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto syntax = [](const std::string& what) {
    return ConfigError(ConfigError::Kind::syntax, "SYNTAX_ERROR", "", "malformed mock script: " + what);
  };
  if (text[first] == '[') {
    try {
      return mock_script_from_json(json::parse(text.begin(), text.end()));
    } catch (const json::parse_error& e) {
      throw syntax(e.what());
    }
  }
  json list = json::array();
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      list.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw syntax(e.what());
    }
  }
  return mock_script_from_json(list);
}

MockScript load_mock_script(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open mock script '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mock_script(ss.str());
}

MockCursor::MockCursor(MockScript script) : script_(std::move(script)), used_(script_.entries.size(), false) {}

ChatResponse MockCursor::next(const ChatRequest& request) {
  std::string prompt;
  for (const auto& m : request.messages) {
    prompt += m.content;
    prompt += '\n';
  }
  std::lock_guard lock(mu_);
  std::optional<size_t> pick;
  for (size_t i = 0; i < script_.entries.size() && !pick; ++i) {
    const auto& e = script_.entries[i];
    if (!used_[i] && e.match && prompt.find(*e.match) != std::string::npos) pick = i;
  }
  for (size_t i = 0; i < script_.entries.size() && !pick; ++i) {
    if (!used_[i] && !script_.entries[i].match) pick = i;
  }
  if (!pick) throw ScriptExhausted("mock script exhausted after " + std::to_string(script_.entries.size()) + " entries");
  used_[*pick] = true;
  ChatResponse r = script_.entries[*pick].respond;
  r.usage.prompt_tokens = static_cast<int>((prompt.size() + 3) / 4);
  size_t out = r.text ? r.text->size() : (r.call ? r.call->arguments.dump().size() : 0);
  r.usage.completion_tokens = static_cast<int>((out + 3) / 4);
  return r;
}

size_t MockCursor::remaining() const {
  std::lock_guard lock(mu_);
  return static_cast<size_t>(std::count(used_.begin(), used_.end(), false));
}

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP provider

namespace {

struct SplitUrl {
  std::string origin;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InvalidArgument("api_base must be an absolute URL: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

json param_schema(const FunctionDecl& d) {
  json props = json::object();
  json required = json::array();
  for (const auto& p : d.parameters) {
    props[p.name] = {{"type", p.type}, {"description", p.description}};
    if (p.required) required.push_back(p.name);
  }
  return {{"type", "object"}, {"properties", props}, {"required", required}};
}

}  // namespace

json chat_payload(const LlmProfile& profile, const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    if (m.role == Role::assistant && m.call) {
      messages.push_back({{"role", "assistant"},
                          {"content", nullptr},
                          {"tool_calls",
                           {{{"id", m.call_id},
                             {"type", "function"},
                             {"function", {{"name", m.call->name}, {"arguments", m.call->arguments.dump()}}}}}}});
    } else if (m.role == Role::tool) {
      messages.push_back({{"role", "tool"}, {"tool_call_id", m.call_id}, {"content", m.content}});
    } else {
      messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
  }
  json body = {{"model", profile.model},
               {"messages", messages},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output_tokens}};
  if (!request.functions.empty()) {
    json tools = json::array();
    for (const auto& f : request.functions)
      tools.push_back({{"type", "function"},
                       {"function", {{"name", f.name}, {"description", f.description}, {"parameters", param_schema(f)}}}});
    body["tools"] = tools;
  }
  return body;
}

ChatResponse parse_chat_completion(const json& body) {
  try {
    const json& msg = body.at("choices").at(0).at("message");
    ChatResponse r;
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
      const json& fn = msg["tool_calls"][0].at("function");
      json args = json::object();
      std::string raw = fn.value("arguments", std::string("{}"));
      try {
        args = json::parse(raw);
      } catch (const json::parse_error&) {
        args = {{"_raw", raw}};
      }
      if (!args.is_object()) args = {{"_raw", raw}};
      r = ChatResponse::from_call({fn.at("name").get<std::string>(), args});
    } else {
      r = ChatResponse::from_text(msg.value("content", json("")).is_string() ? msg["content"].get<std::string>() : "");
    }
    if (body.contains("usage")) {
      r.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("unexpected completion payload: ") + e.what());
  }
}

OpenAiClient::OpenAiClient(RetryPolicy retry, std::chrono::milliseconds timeout) : retry_(retry), timeout_(timeout) {}

json OpenAiClient::post(const LlmProfile& profile, const std::string& endpoint, const json& body) const {
  const char* key = std::getenv(profile.api_key_env.c_str());
  if (!key || !*key) throw AuthError("environment variable " + profile.api_key_env + " is not set");
  SplitUrl url = split_url(profile.api_base);
  std::string payload = body.dump();

  auto backoff = retry_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    httplib::Client cli(url.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
    auto res = cli.Post(url.prefix + endpoint, headers, payload, "application/json");
    if (res) {
      if (res->status >= 200 && res->status < 300) {
        try {
          return json::parse(res->body);
        } catch (const json::parse_error& e) {
          throw ProviderError(std::string("provider returned invalid JSON: ") + e.what());
        }
      }
      if (res->status == 401 || res->status == 403)
        throw AuthError("provider rejected credentials from " + profile.api_key_env + " (status " +
                        std::to_string(res->status) + ")");
      last_error = "status " + std::to_string(res->status);
      if (res->status < 500 && res->status != 429) throw ProviderError("provider error: " + last_error);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long>(static_cast<double>(backoff.count()) * retry_.factor));
    }
  }
  throw ProviderError("provider request failed after " + std::to_string(retry_.attempts) + " attempts: " + last_error);
}

ChatResponse OpenAiClient::complete(const LlmProfile& profile, const ChatRequest& request) const {
  return parse_chat_completion(post(profile, "/chat/completions", chat_payload(profile, request)));
}

std::vector<Embedding> OpenAiClient::embed(const LlmProfile& profile, const std::vector<std::string>& texts) const {
  json body = post(profile, "/embeddings", {{"model", profile.embedding_model}, {"input", texts}});
  std::vector<Embedding> out;
  try {
    for (const auto& item : body.at("data")) {
      Embedding e;
      e.model = profile.embedding_model;
      e.values = item.at("embedding").get<std::vector<double>>();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("unexpected embedding payload: ") + e.what());
  }
  if (out.size() != texts.size()) throw ProviderError("provider returned a wrong number of embeddings");
  for (const auto& e : out) {
    if (e.values.size() != out.front().values.size()) throw ProviderError("embedding dimensions disagree");
    for (double v : e.values) {
      if (!std::isfinite(v)) throw ProviderError("non-finite embedding value");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

namespace {

void check_embed_input(const std::vector<std::string>& texts) {
  if (texts.empty()) throw InvalidArgument("embed: empty input");
  for (const auto& t : texts) {
    if (t.size() > 8192) throw InvalidArgument("embed: text longer than 8192 characters");
  }
}

std::chrono::milliseconds env_timeout() {
  if (const char* v = std::getenv("AGENTS_HTTP_TIMEOUT_MS")) {
    try {
      return std::chrono::milliseconds(std::stol(v));
    } catch (const std::exception&) {
    }
  }
  return std::chrono::milliseconds(10000);
}

}  // namespace

std::vector<Embedding> embed_texts(const LlmProfile& profile, const std::vector<std::string>& texts) {
  check_embed_input(texts);
  if (profile.provider == Provider::mock) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embedding(t, profile.embedding_dim));
    return out;
  }
  return OpenAiClient(RetryPolicy{}, env_timeout()).embed(profile, texts);
}

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)), client_(options_.retry, options_.http_timeout) {
  if (options_.mock_override) cursor_ = std::make_unique<MockCursor>(*options_.mock_override);
  if (!options_.trace_path.empty()) {
    std::filesystem::path p(options_.trace_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    trace_file_.open(p, std::ios::app);
    if (!trace_file_) throw Error("cannot open trace log '" + options_.trace_path + "'");
  }
}

bool Gateway::uses_mock(const LlmProfile& profile) const {
  return options_.mock_override.has_value() || profile.provider == Provider::mock;
}

MockCursor& Gateway::cursor_for(const LlmProfile& profile) {
  std::lock_guard lock(mu_);
  if (cursor_) return *cursor_;
  const json& ref = profile.mock_script;
  if (ref.is_array()) {
    cursor_ = std::make_unique<MockCursor>(mock_script_from_json(ref));
  } else if (ref.is_string()) {
    std::filesystem::path path = ref.get<std::string>();
    if (path.is_relative()) path = std::filesystem::path(options_.base_dir) / path;
    cursor_ = std::make_unique<MockCursor>(load_mock_script(path.string()));
  } else {
    throw ProviderError("mock provider has no script loaded");
  }
  return *cursor_;
}

void Gateway::record(TraceRecord rec) {
  std::lock_guard lock(mu_);
  rec.seq = static_cast<int>(trace_.size());
  if (trace_file_.is_open()) {
    json line = {{"seq", rec.seq},
                 {"kind", rec.kind},
                 {"purpose", rec.context.purpose},
                 {"agent", rec.context.agent},
                 {"state", rec.context.state},
                 {"detail", rec.detail}};
    trace_file_ << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    trace_file_.flush();
  }
  trace_.push_back(std::move(rec));
}

ChatResponse Gateway::complete(const LlmProfile& profile, const ChatRequest& request, const CallContext& context) {
  if (request.messages.empty() || request.messages.front().role != Role::system)
    throw InvalidArgument("chat request must start with a system message");
  std::vector<std::string> names;
  for (const auto& f : request.functions) {
    if (std::find(names.begin(), names.end(), f.name) != names.end())
      throw InvalidArgument("duplicate function declaration '" + f.name + "'");
    names.push_back(f.name);
  }
  json detail = {{"request", to_json(request)}};
  try {
    ChatResponse r = uses_mock(profile) ? cursor_for(profile).next(request) : client_.complete(profile, request);
    detail["response"] = to_json(r);
    record({0, "complete", context, std::move(detail)});
    return r;
  } catch (const Error& e) {
    detail["error"] = e.what();
    record({0, "complete", context, std::move(detail)});
    throw;
  }
}

std::vector<Embedding> Gateway::embed(const LlmProfile& profile, const std::vector<std::string>& texts,
                                      const CallContext& context) {
  check_embed_input(texts);
  json detail = {{"count", texts.size()}};
  try {
    std::vector<Embedding> out;
    if (uses_mock(profile)) {
      LlmProfile local = profile;
      local.provider = Provider::mock;
      out = embed_texts(local, texts);
    } else {
      out = client_.embed(profile, texts);
    }
    {
      std::lock_guard lock(mu_);
      for (const auto& e : out) {
        if (embed_dim_ == 0) embed_dim_ = e.values.size();
        if (e.values.size() != embed_dim_)
          throw ProviderError("embedding dimension changed within a session: " + std::to_string(e.values.size()) +
                              " vs " + std::to_string(embed_dim_));
      }
    }
    detail["dimension"] = out.front().values.size();
    record({0, "embed", context, std::move(detail)});
    return out;
  } catch (const Error& e) {
    detail["error"] = e.what();
    record({0, "embed", context, std::move(detail)});
    throw;
  }
}

std::vector<TraceRecord> Gateway::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

size_t Gateway::count_calls(const std::string& purpose, const std::string& agent) const {
  std::lock_guard lock(mu_);
  return static_cast<size_t>(std::count_if(trace_.begin(), trace_.end(), [&](const TraceRecord& r) {
    return r.kind == "complete" && (purpose.empty() || r.context.purpose == purpose) &&
           (agent.empty() || r.context.agent == agent);
  }));
}

}  // namespace agents
