#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "agents/config.hpp"
#include "agents/llm.hpp"
#include "agents/meta.hpp"
#include "agents/runtime.hpp"
#include "agents/tools.hpp"

namespace httplib {
class Server;
}

namespace agents {

inline constexpr int kDefaultPort = 8910;

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = kDefaultPort;  // 0 picks a free port
  // Root for sessions/, traces/, transcripts/ and memory/ (AGENTS_SESSIONS_DIR).
  std::string data_dir = ".";
  // Used for every created session; mock scripts resolve against base_dir.
  GatewayOptions gateway;
  ToolOptions tools;
  // For POST /v1/generate.
  LlmProfile meta_profile;
  std::optional<MockScript> meta_mock;
  std::vector<std::string> exemplar_files;

  static ServiceOptions from_env();
};

struct ApiError {
  std::string code;
  std::string message;
  int status = 500;
};

nlohmann::json to_json(const ApiError& e);

class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // False when the address cannot be bound (e.g. the port is taken).
  bool bind();
  int port() const { return port_; }

  // Blocks until stop().
  void listen();
  // bind() + listen() on a background thread.
  bool start();
  void stop();

  std::shared_ptr<Session> find(const std::string& id) const;
  size_t session_count() const;

 private:
  struct Entry {
    std::shared_ptr<Session> session;
    std::string created_at;
    std::string config_digest;
    std::thread worker;
  };

  void routes();
  nlohmann::json handle_of(const Entry& e) const;

  ServiceOptions options_;
  ToolRegistry tools_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
  std::thread listener_;
  std::atomic<bool> bound_{false};
  std::atomic<bool> listened_{false};
  std::atomic<bool> stopping_{false};

  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

}  // namespace agents
