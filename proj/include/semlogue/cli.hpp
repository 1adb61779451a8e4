#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace semlogue::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNumericError = 3;

// args excludes the program name. Tables and results go to `out`; the
// effective config and progress go to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace semlogue::cli
