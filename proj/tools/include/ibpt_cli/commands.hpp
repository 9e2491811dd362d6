#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ibpt/error.hpp"

namespace ibpt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

// 1 for input errors, 2 for numerical failures.
int exit_code_for(const Error& e);

// Parses argv (argv[0] is the program name) and runs the command. Output
// files go where --out points; without --out results go to `out`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace ibpt::cli
