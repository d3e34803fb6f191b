#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lingua::cli {

enum ExitCode { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Runs one command line (args exclude the program name). Progress goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// LINGUA_CTC_THREADS, else the hardware concurrency.
std::size_t eval_threads();

}  // namespace lingua::cli
