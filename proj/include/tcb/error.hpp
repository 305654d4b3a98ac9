#pragma once

#include <stdexcept>
#include <string>

namespace tcb {

enum class ErrorCode {
  io,
  bad_magic,
  truncated,
  non_finite,
  unsupported,
  schema,
  missing_file,
  shape_mismatch,
  invalid_argument,
  degenerate,
  scale_guard,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tcb
