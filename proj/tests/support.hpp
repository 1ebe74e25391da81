#pragma once

#include <filesystem>
#include <string>

#include "agents/config.hpp"
#include "agents/util.hpp"

namespace testing {

inline std::string fixture(const std::string& rel) { return std::string(AGENTS_FIXTURES_DIR) + "/" + rel; }

inline agents::SystemConfig load_fixture(const std::string& rel) { return agents::load_config_file(fixture(rel)); }

// Fresh scratch directory under the build tree, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::path(AGENTS_TEST_TMP) / (tag + "-" + agents::random_token(4));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

}  // namespace testing
