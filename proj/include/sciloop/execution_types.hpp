#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sciloop {

struct ExecutionOutcome {
  int exit_code = 0;
  std::string stdout_path;
  std::string stderr_path;
  double duration_seconds = 0.0;
  bool timed_out = false;  // implies exit_code holds the kill status
  std::map<std::string, double> metrics;
  std::string workdir;
  std::string metrics_error;  // set when metrics.json existed but was unusable
};

struct ArtifactEntry {
  std::string name;  // path relative to the iteration directory
  std::string path;  // absolute
  std::uintmax_t size = 0;
  std::string sha256;
  bool operator==(const ArtifactEntry&) const = default;
};

struct ArtifactManifest {
  std::vector<ArtifactEntry> entries;
  std::vector<std::string> missing;  // expected patterns with no match

  bool matches(const std::string& pattern) const;
};

}  // namespace sciloop
