#pragma once

#include <string>
#include <vector>

namespace esl::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInputError = 2, kDivergence = 3 };

/// Entry point shared by the `esl` binary and the CLI tests.
int run(const std::vector<std::string>& args);

/// Parses "0,0.2,0.4"; empty input yields an empty list.
std::vector<double> parse_ratio_list(const std::string& text);

}  // namespace esl::cli
