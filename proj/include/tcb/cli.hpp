#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tcb/jacobian_oracle.hpp"

namespace tcb::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input_error = 1;
inline constexpr int degenerate = 2;
inline constexpr int verification_failed = 3;
inline constexpr int usage = 64;
}  // namespace exit_code

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Body of `verify`: prints one line per property, returns 0 or 3.
int run_verify(const oracle::VerifyConfig& config, std::ostream& out);

}  // namespace tcb::cli
