#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace phaforce::cli {

/// A stage was asked for before the artifacts it consumes exist.
struct MissingDependency : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Output root used when --out is absent.
inline constexpr const char* kOutEnv = "PHAFORCE_OUT";

/// Full command line entry point (args[0] is the program name). Messages go
/// to `out`, errors to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phaforce::cli
