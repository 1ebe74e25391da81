#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "agents/llm.hpp"

namespace agents {

struct MemoryRecord {
  int64_t id = 0;
  std::string agent;
  std::string state;
  std::string content;
  Embedding embedding;
  int turn_index = 0;
  std::string timestamp;

  bool operator==(const MemoryRecord&) const = default;
};

nlohmann::json to_json(const MemoryRecord& r);
MemoryRecord memory_record_from_json(const nlohmann::json& doc);

// Append-only, exact (flat scan) vector index over one agent's actions.
class LongTermStore {
 public:
  // dimension 0 adopts the dimension of the first record
  explicit LongTermStore(int dimension = 0) : dimension_(dimension) {}

  const MemoryRecord& append(MemoryRecord record);
  const std::vector<MemoryRecord>& records() const { return records_; }
  int dimension() const { return dimension_; }
  size_t size() const { return records_.size(); }

  // Each appended record is also written as one ndjson line to path.
  void attach_snapshot(const std::string& path);
  static LongTermStore load_snapshot(const std::string& path);

 private:
  int dimension_;
  std::vector<MemoryRecord> records_;
  std::shared_ptr<std::ofstream> snapshot_;
};

struct RetrievedMemory {
  MemoryRecord record;
  double similarity = 0;
};

MemoryRecord store(LongTermStore& store, const std::string& agent, const std::string& state, const std::string& content,
                   int turn, Gateway& gateway, const LlmProfile& profile);

// Top-min(k, n) records by cosine similarity to the query, descending, lower
// id first on ties.
std::vector<RetrievedMemory> retrieve(const LongTermStore& store, const std::string& query, int k, Gateway& gateway,
                                      const LlmProfile& profile, const std::string& agent = "");

struct Scratchpad {
  std::string text;
  int last_updated_turn = 0;
  size_t max_chars = 2000;
};

struct ScratchpadUpdate {
  Scratchpad pad;
  bool updated = false;
  std::string error;
};

// Cuts to at most max_chars, at the last whitespace when one exists.
std::string truncate_at_word(const std::string& text, size_t max_chars);

ChatRequest scratchpad_request(const Scratchpad& pad, const std::string& new_action, const std::string& observation,
                               const LlmProfile& profile);

// One completion call; provider failures leave the pad unchanged.
ScratchpadUpdate update_scratchpad(const Scratchpad& pad, const std::string& new_action, const std::string& observation,
                                   int turn, const LlmProfile& profile, Gateway& gateway, const CallContext& context);

}  // namespace agents
