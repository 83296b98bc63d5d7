#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace daa {

// Exit codes: 0 success (including --help), 2 usage error, 1 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// args excludes the program name.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

} // namespace daa
