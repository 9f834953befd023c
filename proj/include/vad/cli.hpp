#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vad {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumeric = 3,
    kExitInterrupted = 130,
};

/// Entry point of the `vad` tool. `args` excludes the program name.
/// Subcommands: synth | train | score | eval | sweep.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vad
