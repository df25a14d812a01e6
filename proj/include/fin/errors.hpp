#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fin {

/// Broad failure category. The CLI maps each kind to its own exit code.
enum class ErrorKind {
  argument,   ///< precondition violated by a caller
  config,     ///< inconsistent run configuration
  data,       ///< malformed or unusable input data
  numerical,  ///< factorization failure, non-finite state
  io,         ///< file system failures
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_argument(const std::string& what) {
  throw Error(ErrorKind::argument, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) throw_argument(what);
}

}  // namespace fin
