#pragma once

#include <iosfwd>

namespace unigan::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;

// Entry point of the `unigan` tool. Diagnostics go to `err`, results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace unigan::cli
