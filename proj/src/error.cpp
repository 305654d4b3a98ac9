#include "tcb/error.hpp"

namespace tcb {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io error";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::truncated: return "truncated payload";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::schema: return "schema violation";
    case ErrorCode::missing_file: return "missing file";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::degenerate: return "degenerate input";
    case ErrorCode::scale_guard: return "scale guard exceeded";
  }
  return "unknown error";
}

}  // namespace tcb
