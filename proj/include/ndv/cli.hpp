#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ndv {

enum ExitCode : int {
    kExitOk = 0,
    kExitVerifyFailed = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitUnsupported = 4,
};

// Entry point of the ndvideo tool; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ndv
