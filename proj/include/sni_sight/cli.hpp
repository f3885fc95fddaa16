#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sni_sight::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs one command line (args excludes the program name). Normal output goes
/// to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sni_sight::cli
