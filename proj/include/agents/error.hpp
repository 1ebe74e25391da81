#pragma once

#include <stdexcept>
#include <string>

namespace agents {

// Root of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Configuration failures carry a machine-readable code and the dotted path
// of the offending field (e.g. "sop.states.opening.transitions[0]").
class ConfigError : public Error {
 public:
  enum class Kind { syntax, schema, reference };

  ConfigError(Kind kind, std::string code, std::string path, const std::string& message)
      : Error(message), kind_(kind), code_(std::move(code)), path_(std::move(path)) {}

  Kind kind() const { return kind_; }
  const std::string& code() const { return code_; }
  const std::string& path() const { return path_; }

 private:
  Kind kind_;
  std::string code_;
  std::string path_;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace agents
