#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace attrib::cli {

// Returns the value of an environment variable, if set.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_environment();

// Runs one command line (without the program name). Settings resolve as
// flag, then ATTRIB_<NAME> environment variable (e.g. ATTRIB_NUM_SAMPLES),
// then the --config file, then the built-in default.
//
// Exit codes: 0 success, 1 failure (one "error: ..." line on err), 2 usage
// error (diagnostic plus usage text on err).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_environment());

}  // namespace attrib::cli
