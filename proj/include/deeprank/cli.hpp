#pragma once

// Command-line front end. Subcommands: synth, train, finetune, eval, openworld,
// fuse, scores. Every run writes <out>/manifest.json before doing real work.

#include <iosfwd>
#include <string>
#include <vector>

namespace deeprank {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one command line (args[0] is the program name). Returns the exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deeprank
