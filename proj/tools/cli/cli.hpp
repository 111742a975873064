#pragma once

#include <string>
#include <vector>

namespace gels::cli {

// Entry point shared by the binary and the in-process tests.  argv[0] is the
// program name.  Returns the process exit code: 0 success, 1 validation or
// runtime failure, 2 usage error.
int run(const std::vector<std::string>& args);

}  // namespace gels::cli
