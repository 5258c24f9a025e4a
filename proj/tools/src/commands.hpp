#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fsnids/error.hpp"

namespace fsnids::cli {

// A command's input artifact does not exist.
class missing_artifact_error : public error {
public:
    using error::error;
};

// Parses `args` (without the program name) and runs one subcommand.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(const std::exception& e);

}  // namespace fsnids::cli
