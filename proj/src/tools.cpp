#include "agents/tools.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "agents/error.hpp"

namespace agents {

using nlohmann::json;
namespace fs = std::filesystem;

void ToolRegistry::add(ToolDef def) {
  std::string name = def.decl.name;
  if (name.empty()) throw InvalidArgument("tool needs a name");
  if (!tools_.emplace(name, std::move(def)).second) throw InvalidArgument("tool '" + name + "' registered twice");
}

const ToolDef* ToolRegistry::find(std::string_view name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? nullptr : &it->second;
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : tools_) out.push_back(name);
  return out;
}

namespace {

bool type_matches(const std::string& type, const json& v) {
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  return true;
}

}  // namespace

ToolResult ToolRegistry::invoke(const std::string& name, const json& params) const {
  auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return static_cast<long>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
  };
  const ToolDef* def = find(name);
  if (!def) return ToolResult::failure(name, "unknown tool '" + name + "'");
  if (!params.is_object()) return ToolResult::failure(name, "parameters must be an object");
  for (const auto& p : def->decl.parameters) {
    auto it = params.find(p.name);
    if (it == params.end() || it->is_null()) {
      if (p.required) return ToolResult::failure(name, "missing required parameter " + p.name);
      continue;
    }
    if (!type_matches(p.type, *it))
      return ToolResult::failure(name, "parameter " + p.name + " must be of type " + p.type);
  }
  ToolResult r;
  try {
    r = def->run(params);
  } catch (const std::exception& e) {
    r = ToolResult::failure(name, e.what());
  }
  r.tool_name = name;
  r.ok = !r.error.has_value();
  r.content = bound_content(r.content, def->max_chars);
  if (r.error) r.error = bound_content(*r.error, def->max_chars);
  r.latency_ms = elapsed();
  return r;
}

ToolOptions ToolOptions::from_env() {
  ToolOptions o;
  if (const char* v = std::getenv("AGENTS_SEARCH_BACKEND")) o.search_backend = v;
  if (const char* v = std::getenv("AGENTS_KB_ROOT")) o.kb_root = v;
  if (const char* v = std::getenv("AGENTS_HTTP_TIMEOUT_MS")) {
    try {
      o.http_timeout = std::chrono::milliseconds(std::stol(v));
    } catch (const std::exception&) {
    }
  }
  return o;
}

std::string bound_content(const std::string& text, size_t max_chars) {
  std::string clean;
  clean.reserve(text.size());
  for (unsigned char c : text) {
    if (c == '\n' || c == '\t' || c >= 0x20) {
      if (c != 0x7f) clean.push_back(static_cast<char>(c));
    }
  }
  if (clean.size() <= max_chars) return clean;
  size_t keep = max_chars > kTruncationMarker.size() ? max_chars - kTruncationMarker.size() : 0;
  // don't split a UTF-8 sequence
  while (keep > 0 && (static_cast<unsigned char>(clean[keep]) & 0xC0) == 0x80) --keep;
  clean.resize(keep);
  clean += kTruncationMarker;
  if (clean.size() > max_chars) clean.resize(max_chars);
  return clean;
}

std::vector<std::string> chunk_text(const std::string& text, size_t target) {
  std::vector<std::string> paragraphs;
  {
    std::istringstream in(text);
    std::string line, current;
    auto flush = [&] {
      auto b = current.find_first_not_of(" \t\r\n");
      if (b != std::string::npos) {
        auto e = current.find_last_not_of(" \t\r\n");
        paragraphs.push_back(current.substr(b, e - b + 1));
      }
      current.clear();
    };
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) {
        flush();
      } else {
        if (!current.empty()) current += '\n';
        current += line;
      }
    }
    flush();
  }

  std::vector<std::string> pieces;
  for (const auto& p : paragraphs) {
    if (p.size() <= target) {
      pieces.push_back(p);
      continue;
    }
    std::istringstream words(p);
    std::string w, cur;
    while (words >> w) {
      if (!cur.empty() && cur.size() + 1 + w.size() > target) {
        pieces.push_back(cur);
        cur.clear();
      }
      if (!cur.empty()) cur += ' ';
      cur += w;
    }
    if (!cur.empty()) pieces.push_back(cur);
  }

  std::vector<std::string> chunks;
  std::string cur;
  for (const auto& p : pieces) {
    if (!cur.empty() && cur.size() + 2 + p.size() > target) {
      chunks.push_back(cur);
      cur.clear();
    }
    if (!cur.empty()) cur += "\n\n";
    cur += p;
  }
  if (!cur.empty()) chunks.push_back(cur);
  return chunks;
}

KnowledgeBase KnowledgeBase::from_chunks(std::vector<KbChunk> chunks, Embedder embed) {
  KnowledgeBase kb;
  kb.chunks_ = std::move(chunks);
  kb.embed_ = std::move(embed);
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::string& dir, const Embedder& embed) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<KbChunk> chunks;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    for (auto& c : chunk_text(ss.str())) chunks.push_back({f.filename().string(), std::move(c), {}});
  }
  constexpr size_t batch = 64;
  for (size_t i = 0; i < chunks.size(); i += batch) {
    std::vector<std::string> texts;
    for (size_t j = i; j < std::min(chunks.size(), i + batch); ++j) texts.push_back(chunks[j].text);
    auto vectors = embed(texts);
    for (size_t j = 0; j < vectors.size(); ++j) chunks[i + j].embedding = std::move(vectors[j]);
  }
  return from_chunks(std::move(chunks), embed);
}

std::vector<KbHit> KnowledgeBase::query(const std::string& q, size_t k) const {
  if (chunks_.empty()) return {};
  Embedding qv = embed_({q}).front();
  std::vector<const std::vector<double>*> candidates;
  for (const auto& c : chunks_) candidates.push_back(&c.embedding.values);
  std::vector<KbHit> hits;
  for (const auto& r : rank_by_cosine(qv.values, candidates, k))
    hits.push_back({r.index, chunks_[r.index].source, chunks_[r.index].text, r.similarity});
  return hits;
}

std::string html_to_text(const std::string& html) {
  std::string out;
  size_t i = 0;
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  static const std::set<std::string> block = {"p",  "br", "div", "li", "h1", "h2", "h3",     "h4",
                                              "h5", "h6", "tr",  "ul", "ol", "table", "section", "article"};
  while (i < html.size()) {
    if (html[i] == '<') {
      size_t end = html.find('>', i);
      if (end == std::string::npos) break;
      std::string tag = lower(html.substr(i + 1, end - i - 1));
      bool closing = !tag.empty() && tag[0] == '/';
      std::string name = tag.substr(closing ? 1 : 0);
      name = name.substr(0, name.find_first_of(" \t\r\n/"));
      if (!closing && (name == "script" || name == "style")) {
        size_t close = lower(html).find("</" + name, end);
        i = close == std::string::npos ? html.size() : html.find('>', close);
        i = i == std::string::npos ? html.size() : i + 1;
        continue;
      }
      if (block.contains(name)) out += '\n';
      i = end + 1;
      continue;
    }
    if (html[i] == '&') {
      static const std::vector<std::pair<std::string, std::string>> entities = {
          {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}, {"&nbsp;", " "}};
      bool hit = false;
      for (const auto& [e, r] : entities) {
        if (html.compare(i, e.size(), e) == 0) {
          out += r;
          i += e.size();
          hit = true;
          break;
        }
      }
      if (hit) continue;
    }
    out += html[i++];
  }

  // collapse whitespace inside lines, drop blank lines
  std::istringstream in(out);
  std::string line, result;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::string w, collapsed;
    while (words >> w) {
      if (!collapsed.empty()) collapsed += ' ';
      collapsed += w;
    }
    if (collapsed.empty()) continue;
    if (!result.empty()) result += '\n';
    result += collapsed;
  }
  return result;
}

namespace {

void apply_timeout(httplib::Client& cli, std::chrono::milliseconds t) {
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(t);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(t - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
}

bool split_origin(const std::string& url, std::string& origin, std::string& path) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) return false;
  auto slash = url.find('/', scheme + 3);
  origin = slash == std::string::npos ? url : url.substr(0, slash);
  path = slash == std::string::npos ? "/" : url.substr(slash);
  return true;
}

}  // namespace

ToolResult web_search(const ToolOptions& options, const std::string& q, int top_n) {
  const std::string tool = "web_search";
  if (options.search_backend.empty())
    return ToolResult::failure(tool, "search backend not configured (set AGENTS_SEARCH_BACKEND)");
  if (top_n < 1) return ToolResult::failure(tool, "top_n must be positive");
  std::string origin, prefix;
  if (!split_origin(options.search_backend, origin, prefix)) return ToolResult::failure(tool, "invalid search backend URL");
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client cli(origin);
  apply_timeout(cli, options.http_timeout);
  httplib::Params params = {{"q", q}, {"n", std::to_string(top_n)}};
  auto res = cli.Get(prefix + "/search", params, httplib::Headers{});
  if (!res) return ToolResult::failure(tool, "transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) return ToolResult::failure(tool, "status " + std::to_string(res->status));

  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error&) {
    return ToolResult::failure(tool, "search backend returned invalid JSON");
  }
  if (!body.contains("results") || !body["results"].is_array())
    return ToolResult::failure(tool, "search backend response lacks 'results'");
  std::string out;
  int n = 0;
  for (const auto& item : body["results"]) {
    if (n == top_n) break;
    if (!out.empty()) out += '\n';
    out += std::to_string(++n) + ". " + item.value("title", std::string()) + "\n   " +
           item.value("url", std::string()) + "\n   " + item.value("snippet", std::string());
  }
  ToolResult r;
  r.tool_name = tool;
  r.content = n == 0 ? "no results" : out;
  return r;
}

ToolResult web_fetch(const ToolOptions& options, const std::string& url, size_t max_chars) {
  const std::string tool = "web_fetch";
  if (!url.starts_with("http://") && !url.starts_with("https://"))
    return ToolResult::failure(tool, "only http(s) URLs can be fetched");
  std::string origin, path;
  if (!split_origin(url, origin, path)) return ToolResult::failure(tool, "invalid URL");
  httplib::Client cli(origin);
  apply_timeout(cli, options.http_timeout);
  cli.set_follow_location(true);
  auto res = cli.Get(path);
  if (!res) return ToolResult::failure(tool, "transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) return ToolResult::failure(tool, "status " + std::to_string(res->status));
  std::string type = res->get_header_value("Content-Type");
  std::transform(type.begin(), type.end(), type.begin(), [](unsigned char c) { return std::tolower(c); });
  std::string text;
  if (type.find("html") != std::string::npos) {
    text = html_to_text(res->body);
  } else if (type.empty() || type.starts_with("text/")) {
    text = res->body;
  } else {
    return ToolResult::failure(tool, "non-text content type " + type);
  }
  ToolResult r;
  r.tool_name = tool;
  r.content = bound_content(text, max_chars);
  return r;
}

ToolRegistry builtin_tools(const ToolOptions& options) {
  ToolRegistry reg;

  reg.add({{"echo", "Returns its input unchanged (test tool).", {{"text", "string", true, "text to echo"}}},
           {ToolMode::prepend, ToolMode::function_call},
           [](const json& p) {
             ToolResult r;
             r.content = p["text"].get<std::string>();
             return r;
           }});

  reg.add({{"web_search",
            "Searches the web and returns the top results with title, url and snippet.",
            {{"q", "string", true, "search query"}, {"top_n", "integer", false, "number of results (default 3)"}}},
           {ToolMode::prepend, ToolMode::function_call},
           [options](const json& p) {
             return web_search(options, p["q"].get<std::string>(), p.value("top_n", 3));
           }});

  reg.add({{"web_fetch",
            "Fetches a web page and returns its text content.",
            {{"url", "string", true, "http(s) URL"}, {"max_chars", "integer", false, "maximum characters (default 4000)"}}},
           {ToolMode::prepend, ToolMode::function_call},
           [options](const json& p) {
             int max = p.value("max_chars", 4000);
             return web_fetch(options, p["url"].get<std::string>(), static_cast<size_t>(std::max(1, max)));
           },
           4000});

  auto kbs = std::make_shared<std::map<std::string, KnowledgeBase>>();
  KnowledgeBase::Embedder embedder = [profile = options.embed_profile](const std::vector<std::string>& texts) {
    return embed_texts(profile, texts);
  };
  std::error_code ec;
  if (!options.kb_root.empty() && fs::is_directory(options.kb_root, ec)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(options.kb_root)) {
      if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) kbs->emplace(d.filename().string(), KnowledgeBase::load(d.string(), embedder));
  }
  reg.add({{"knowledge_base_query",
            "Returns the passages of a local knowledge base most similar to the query.",
            {{"kb_id", "string", true, "knowledge base identifier"},
             {"q", "string", true, "query"},
             {"k", "integer", false, "number of passages (default 3)"}}},
           {ToolMode::prepend, ToolMode::function_call},
           [kbs](const json& p) {
             const std::string tool = "knowledge_base_query";
             std::string id = p["kb_id"].get<std::string>();
             auto it = kbs->find(id);
             if (it == kbs->end()) return ToolResult::failure(tool, "unknown knowledge base '" + id + "'");
             int k = p.value("k", 3);
             if (k < 1) return ToolResult::failure(tool, "k must be positive");
             std::string out;
             int n = 0;
             for (const auto& hit : it->second.query(p["q"].get<std::string>(), static_cast<size_t>(k))) {
               if (!out.empty()) out += "\n\n";
               std::ostringstream sim;
               sim.setf(std::ios::fixed);
               sim.precision(4);
               sim << hit.similarity;
               out += std::to_string(++n) + ". [" + hit.source + "] (" + sim.str() + ")\n" + hit.text;
             }
             ToolResult r;
             r.content = n == 0 ? "no passages" : out;
             return r;
           }});
  return reg;
}

}  // namespace agents
