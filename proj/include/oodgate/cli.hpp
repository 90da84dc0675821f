#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace oodgate::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (without the program name). Subcommands:
/// gen, fit, score, eval, sweep, ablate, diag, replay. Every run that writes
/// files also writes "<out>.manifest.json" holding the argv needed to replay it.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oodgate::cli
