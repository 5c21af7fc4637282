#pragma once

#include <string>
#include <vector>

namespace uzlm::cli {

// Entry point for the uzlm command-line tool. `args` excludes the program
// name. Subcommands: corpus-prepare, tokenizer-train, pretrain, evaluate.
// Returns 0 on success, 1 on a usage or configuration error, 2 on a runtime
// failure.
int run(const std::vector<std::string>& args);

}  // namespace uzlm::cli
