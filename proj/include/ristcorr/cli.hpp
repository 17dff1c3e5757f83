#pragma once

#include <string>
#include <vector>

namespace ristcorr {

// Runs the command-line application in-process. `args` excludes argv[0].
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure, 5 equivariance gate exceeded.
int run_cli(const std::vector<std::string>& args);

}  // namespace ristcorr
