#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace drumremap {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point behind the drumremap executable. argv[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace drumremap
