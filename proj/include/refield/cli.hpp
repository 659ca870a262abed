#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace refield {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Runs one subcommand (synth-dataset, fit-geometry, render-olat, relight,
/// estimate-light, train, eval). A JSON summary goes to `out`, usage text and
/// logs to `err`. Returns an ExitCode.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

} // namespace refield
