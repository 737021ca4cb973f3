#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace resqrl {

/// Bad configuration or user input; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Entry point of the command-line tool. Subcommands: simulate, fit,
 * estimate, sensitivity, km. Returns 0 on success, 2 on configuration or
 * validation errors and 1 on runtime failures.
 */
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace resqrl
