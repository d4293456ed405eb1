#pragma once

// Execution of code states as subprocesses inside a per-project directory
// tree, artifact manifests, and debug reports for failed runs.
//
// Layout: <workdir_root>/<project>/<vNNN>/{main.src, stdout.log, stderr.log,
// metrics.json, artifacts...}

#include <string>
#include <vector>

#include "sciloop/cells.hpp"
#include "sciloop/conceptualization.hpp"
#include "sciloop/execution_types.hpp"
#include "sciloop/json_io.hpp"
#include "sciloop/llm.hpp"

namespace sciloop::sandbox {

struct RuntimeConfig {
  /// "{script}" is replaced by the script path; appended when absent.
  std::vector<std::string> interpreter_command{"python3", "{script}"};
  double timeout_seconds = 1800.0;
  std::string workdir_root = "runs";
  std::vector<std::string> artifact_patterns{"*.png", "*.npz", "*.mat", "*.csv"};
  std::vector<std::string> env_allowlist{"PATH", "HOME", "LANG", "PYTHONPATH"};
  std::string script_name = "main.src";

  /// Throws InvariantError for an empty command, a non-positive timeout or a
  /// script name with a path separator.
  void validate() const;
  static RuntimeConfig from_json(const Json& j);
  Json to_json() const;
};

inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kStdoutFile = "stdout.log";
inline constexpr const char* kStderrFile = "stderr.log";

class ContainmentError : public Error {
 public:
  using Error::Error;
};

/// True when `path` resolves inside `root` (both made absolute, lexically normalised).
bool is_contained(const std::string& root, const std::string& path);

/// Filing call turned into a fresh directory under the workdir root. The
/// reply slug is made filesystem-safe and suffixed _2, _3 on collision. When
/// the backend fails the name is prob_<8 hex of the title hash>.
std::string assign_project_name(const concept_team::FormalProblem& problem,
                                const std::string& workdir_root, llm::Backend& backend,
                                const std::string& system_prompt);

struct VersionDir {
  int number = 0;
  std::string name;  // v001
  std::string path;  // absolute
};

/// Creates v<max+1> (three digits minimum). Existing versions are never reused.
VersionDir next_version(const std::string& project_dir);

/// Versions present in a project directory, ascending.
std::vector<int> existing_versions(const std::string& project_dir);

/// Writes the script into `iteration_dir` (which must be inside the workdir
/// root and must not already hold one), runs the interpreter there with the
/// allowlisted environment, and parses metrics.json when present.
ExecutionOutcome execute(const std::string& script_source, const std::string& iteration_dir,
                         const RuntimeConfig& runtime);

/// Files under `dir` whose relative path or file name matches a pattern,
/// sorted by name, with sizes and hashes. `expected` patterns without a match
/// are listed as missing.
ArtifactManifest collect_artifacts(const std::string& dir, const std::vector<std::string>& patterns,
                                   const std::vector<std::string>& expected);

struct DebugReport {
  std::string error_class;
  std::vector<int> suspect_cells;
  std::string fix_directive;
  bool from_backend = false;
  Json to_json() const;
};

/// Last `max_chars` characters of stderr (or stdout when stderr is empty).
std::string log_excerpt(const ExecutionOutcome& outcome, std::size_t max_chars = 4000);

/// Cells named by traceback lines that refer to the script file, in order of
/// appearance, without duplicates.
std::vector<int> traceback_cells(const std::string& log, const cells::CellScript& script,
                                 const std::string& script_name = "main.src");

/// Last "...Error" or "...Exception" token of the log, or empty.
std::string error_class_of(const std::string& log);

/// Debugger call for a failed run. Timeouts are reported without a call. An
/// unusable reply yields a generic directive that embeds the stderr excerpt.
DebugReport debug_report(const ExecutionOutcome& outcome, const cells::CellScript& script,
                         llm::Backend& backend, const std::string& system_prompt,
                         const std::string& script_name = "main.src");

}  // namespace sciloop::sandbox
