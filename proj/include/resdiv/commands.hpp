#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace resdiv::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSuiteFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitValidation = 4;

// Runs `resdiv <subcommand> ...`; args excludes the program name. Normal output
// goes to out, diagnostics to err. Never throws for user errors; the return
// value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace resdiv::cli
