#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cvh {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitIo = 2,
    kExitVerifyFailed = 3,
};

// Entry point of the `cvhssr` tool. args[0] is the program name.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_run(int argc, char** argv);

} // namespace cvh
