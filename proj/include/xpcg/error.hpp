#pragma once

#include <stdexcept>
#include <string>

namespace xpcg {

/// Error categories shared by every module. The service maps them onto HTTP
/// statuses and the CLI onto exit codes.
enum class ErrorKind {
  Validation,   // malformed input or contract violation by the caller
  Conflict,     // concurrent writer or vocabulary conflict
  Precondition, // a prerequisite model is missing or stale
  NotFound,
  Runtime,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error validation_error(std::string code, const std::string& message) {
  return Error(ErrorKind::Validation, std::move(code), message);
}

}  // namespace xpcg
