#include "agents/memory.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "agents/error.hpp"
#include "agents/util.hpp"

namespace agents {

using nlohmann::json;

json to_json(const MemoryRecord& r) {
  return {{"id", r.id},
          {"agent", r.agent},
          {"state", r.state},
          {"content", r.content},
          {"embedding", r.embedding.values},
          {"model", r.embedding.model},
          {"turn_index", r.turn_index},
          {"timestamp", r.timestamp}};
}

MemoryRecord memory_record_from_json(const json& doc) {
  MemoryRecord r;
  r.id = doc.at("id").get<int64_t>();
  r.agent = doc.at("agent").get<std::string>();
  r.state = doc.at("state").get<std::string>();
  r.content = doc.at("content").get<std::string>();
  r.embedding.values = doc.at("embedding").get<std::vector<double>>();
  r.embedding.model = doc.value("model", std::string());
  r.turn_index = doc.at("turn_index").get<int>();
  r.timestamp = doc.value("timestamp", std::string());
  return r;
}

const MemoryRecord& LongTermStore::append(MemoryRecord record) {
  if (dimension_ == 0) dimension_ = static_cast<int>(record.embedding.values.size());
  if (static_cast<int>(record.embedding.values.size()) != dimension_)
    throw InvalidArgument("embedding dimension " + std::to_string(record.embedding.values.size()) +
                          " does not match store dimension " + std::to_string(dimension_));
  record.id = records_.empty() ? 0 : records_.back().id + 1;
  records_.push_back(std::move(record));
  if (snapshot_) {
    *snapshot_ << to_json(records_.back()).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    snapshot_->flush();
  }
  return records_.back();
}

void LongTermStore::attach_snapshot(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  snapshot_ = std::make_shared<std::ofstream>(p, std::ios::app);
  if (!*snapshot_) throw Error("cannot open memory snapshot '" + path + "'");
}

LongTermStore LongTermStore::load_snapshot(const std::string& path) {
  std::istringstream in(read_file(path));
  LongTermStore s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    MemoryRecord r = memory_record_from_json(json::parse(line));
    int64_t id = r.id;
    const auto& added = s.append(std::move(r));
    if (added.id != id) throw Error("memory snapshot '" + path + "' has non-dense ids");
  }
  return s;
}

MemoryRecord store(LongTermStore& store, const std::string& agent, const std::string& state, const std::string& content,
                   int turn, Gateway& gateway, const LlmProfile& profile) {
  if (content.empty()) throw InvalidArgument("memory content must be non-empty");
  // Long actions are embedded by their leading 8192 characters.
  std::string text = content.size() > 8192 ? truncate_at_word(content, 8192) : content;
  Embedding e = gateway.embed(profile, {text}, {"memory_store", agent, state}).front();
  MemoryRecord r;
  r.agent = agent;
  r.state = state;
  r.content = content;
  r.embedding = std::move(e);
  r.turn_index = turn;
  r.timestamp = utc_now_iso();
  return store.append(std::move(r));
}

std::vector<RetrievedMemory> retrieve(const LongTermStore& store, const std::string& query, int k, Gateway& gateway,
                                      const LlmProfile& profile, const std::string& agent) {
  if (k < 1) throw InvalidArgument("retrieve: k must be >= 1");
  if (query.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidArgument("retrieve: empty query");
  if (store.records().empty()) return {};
  std::string text = query.size() > 8192 ? truncate_at_word(query, 8192) : query;
  Embedding q = gateway.embed(profile, {text}, {"memory_query", agent, ""}).front();
  std::vector<const std::vector<double>*> candidates;
  candidates.reserve(store.size());
  for (const auto& r : store.records()) candidates.push_back(&r.embedding.values);
  std::vector<RetrievedMemory> out;
  for (const auto& hit : rank_by_cosine(q.values, candidates, static_cast<size_t>(k)))
    out.push_back({store.records()[hit.index], hit.similarity});
  return out;
}

std::string truncate_at_word(const std::string& text, size_t max_chars) {
  if (text.size() <= max_chars) return text;
  auto is_space = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; };
  size_t cut = max_chars;
  if (!is_space(text[cut])) {
    size_t ws = text.find_last_of(" \n\t\r", cut - 1);
    if (ws != std::string::npos && ws > 0) {
      cut = ws;
    } else {
      while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    }
  }
  while (cut > 0 && is_space(text[cut - 1])) --cut;
  return text.substr(0, cut);
}

ChatRequest scratchpad_request(const Scratchpad& pad, const std::string& new_action, const std::string& observation,
                               const LlmProfile& profile) {
  ChatRequest req;
  req.temperature = profile.temperature;
  req.max_output_tokens = profile.max_output_tokens;
  req.messages.push_back(
      {Role::system,
       "You maintain an agent's working memory: a short plain-prose summary of what has happened so far and "
       "what matters for the agent's next actions. Keep it under " +
           std::to_string(pad.max_chars) + " characters."});
  std::string user = "Current summary:\n" + (pad.text.empty() ? std::string("(empty)") : pad.text) +
                     "\n\nThe agent just did:\n" + new_action + "\n\nWhat the agent observed before acting:\n" +
                     (observation.empty() ? std::string("(nothing)") : observation) +
                     "\n\nWrite the revised summary. Reply with the summary text only.";
  req.messages.push_back({Role::user, user});
  return req;
}

ScratchpadUpdate update_scratchpad(const Scratchpad& pad, const std::string& new_action, const std::string& observation,
                                   int turn, const LlmProfile& profile, Gateway& gateway, const CallContext& context) {
  ScratchpadUpdate out{pad, false, ""};
  try {
    ChatResponse r = gateway.complete(profile, scratchpad_request(pad, new_action, observation, profile), context);
    if (r.kind != ChatResponse::Kind::text) {
      out.error = "scratchpad update returned a function call";
      return out;
    }
    out.pad.text = truncate_at_word(*r.text, pad.max_chars);
    out.pad.last_updated_turn = std::max(pad.last_updated_turn, turn);
    out.updated = true;
  } catch (const ProviderError& e) {
    out.error = e.what();
  } catch (const AuthError& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace agents
