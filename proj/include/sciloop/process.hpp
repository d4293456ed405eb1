#pragma once

// Subprocess execution with a wall-clock limit. The child runs in its own
// process group so a timeout kills everything it spawned.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sciloop/common.hpp"

namespace sciloop {

class SpawnError : public Error {
 public:
  using Error::Error;
};

struct ProcessSpec {
  std::vector<std::string> argv;
  std::string cwd;
  std::map<std::string, std::string> env;  // complete child environment
  double timeout_seconds = 60.0;
  std::string stdout_path;  // empty: discard
  std::string stderr_path;  // empty: discard
};

struct ProcessResult {
  int exit_code = 0;  // 128 + signal when killed by a signal
  bool timed_out = false;
  double duration_seconds = 0.0;
};

inline constexpr int kKilledExitCode = 137;

/// Resolves argv[0] against PATH (the child's if set, else the parent's).
std::optional<std::string> find_executable(const std::string& name, const std::string& path_var);

/// Throws SpawnError when the executable cannot be found or fork fails.
ProcessResult run_process(const ProcessSpec& spec);

/// Subset of the current environment whose names appear in `allowlist`.
std::map<std::string, std::string> allowlisted_environment(const std::vector<std::string>& allowlist);

}  // namespace sciloop
