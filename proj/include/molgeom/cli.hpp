#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace molgeom::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kSchema = 2;    // schema, grammar, unsupported token, index, config, unreadable input
inline constexpr int kGeometry = 3;
inline constexpr int kLength = 4;
inline constexpr int kMismatch = 5;  // SELFIES/conformer mismatch, unknown vocabulary token
inline constexpr int kShape = 6;     // shape, degenerate mask, cache mismatch, unwritable output

int exit_code_for(const std::exception& e);

// args excludes the program name. Results go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace molgeom::cli
