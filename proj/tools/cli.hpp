#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sepgd::cli {

enum ExitCode : int {
    kOk = 0,
    kVerificationFailed = 1,
    kConfigError = 2,
    kIoError = 3,
};

/// Entry point shared by the executable and the tests. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sepgd::cli
