#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace partstyle::cli {

// Exit codes: 0 success, 1 failed validation or run, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partstyle::cli
