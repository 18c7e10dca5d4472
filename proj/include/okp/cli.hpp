#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace okp {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_io = 3, exit_internal = 4 };

/// Entry point of the `okp` tool. `args` excludes the program name.
///
///   okp <train|unlearn|eval|sweep|stats|mia> --config run.json [--checkpoint model.okpf]
///       [--seed N] [--out DIR]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace okp
