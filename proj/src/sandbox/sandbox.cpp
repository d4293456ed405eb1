#include "sciloop/sandbox.hpp"

#include <algorithm>
#include <filesystem>
#include <regex>
#include <set>

#include "sciloop/process.hpp"

namespace fs = std::filesystem;

namespace sciloop::sandbox {

namespace {

std::string absolute_normal(const std::string& p) {
  return fs::absolute(fs::path(p)).lexically_normal().string();
}

std::string regex_escape(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
  return std::regex_replace(s, special, R"(\$&)");
}

std::string tail(const std::string& s, std::size_t n) {
  return s.size() <= n ? s : "..." + s.substr(s.size() - n);
}

std::string read_if_exists(const std::string& path) {
  std::error_code ec;
  if (path.empty() || !fs::exists(path, ec)) return {};
  return read_file(path);
}

std::string format_seconds(double s) {
  std::string out = std::to_string(s);
  out.erase(out.find_last_not_of('0') + 1);
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

}  // namespace

void RuntimeConfig::validate() const {
  if (interpreter_command.empty() || trim(interpreter_command.front()).empty()) {
    throw InvariantError("runtime.interpreter_command must not be empty");
  }
  if (!(timeout_seconds > 0.0)) throw InvariantError("runtime.timeout_seconds must be positive");
  if (workdir_root.empty()) throw InvariantError("runtime.workdir_root must not be empty");
  if (script_name.empty() || script_name.find('/') != std::string::npos || script_name == "." ||
      script_name == "..") {
    throw InvariantError("runtime.script_name must be a plain file name");
  }
}

RuntimeConfig RuntimeConfig::from_json(const Json& j) {
  static const std::set<std::string> known{"interpreter_command", "timeout_seconds", "workdir_root",
                                           "artifact_patterns", "env_allowlist", "script_name"};
  if (!j.is_object()) throw InvariantError("runtime must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw InvariantError("unknown config key 'runtime." + k + "'");
  }
  RuntimeConfig c;
  if (j.contains("interpreter_command")) c.interpreter_command = string_list(j, "interpreter_command");
  if (j.contains("timeout_seconds")) c.timeout_seconds = require_number(j, "timeout_seconds");
  if (j.contains("workdir_root")) c.workdir_root = require_string(j, "workdir_root");
  if (j.contains("artifact_patterns")) c.artifact_patterns = string_list(j, "artifact_patterns");
  if (j.contains("env_allowlist")) c.env_allowlist = string_list(j, "env_allowlist");
  if (j.contains("script_name")) c.script_name = require_string(j, "script_name");
  c.validate();
  return c;
}

Json RuntimeConfig::to_json() const {
  return Json{{"interpreter_command", interpreter_command},
              {"timeout_seconds", timeout_seconds},
              {"workdir_root", workdir_root},
              {"artifact_patterns", artifact_patterns},
              {"env_allowlist", env_allowlist},
              {"script_name", script_name}};
}

bool is_contained(const std::string& root, const std::string& path) {
  const fs::path r = absolute_normal(root);
  const fs::path p = absolute_normal(path);
  auto ri = r.begin();
  auto pi = p.begin();
  for (; ri != r.end(); ++ri, ++pi) {
    if (ri->empty()) continue;  // trailing separator
    if (pi == p.end() || *ri != *pi) return false;
  }
  return true;
}

std::string assign_project_name(const concept_team::FormalProblem& problem,
                                const std::string& workdir_root, llm::Backend& backend,
                                const std::string& system_prompt) {
  std::string base;
  try {
    llm::ChatRequest req;
    req.role_id = "filing";
    req.system_prompt = system_prompt;
    req.messages.push_back({"user", problem.describe()});
    req.response_schema = "project_name";
    base = llm::ask_structured<std::string>(backend, req, [](const Json& j) {
      const std::string slug = slugify(require_string(j, "project_name"));
      if (slug.empty()) throw InvariantError("project_name has no usable characters");
      return slug;
    });
  } catch (const llm::MissingFixtureError&) {
    throw;
  } catch (const llm::BackendError&) {
    base.clear();
  } catch (const llm::SchemaError&) {
    base.clear();
  }
  if (base.empty()) base = "prob_" + sha256_hex(problem.title).substr(0, 8);

  fs::create_directories(workdir_root);
  std::string name = base;
  for (int k = 2; fs::exists(fs::path(workdir_root) / name); ++k) {
    name = base + "_" + std::to_string(k);
  }
  fs::create_directories(fs::path(workdir_root) / name);
  return name;
}

std::vector<int> existing_versions(const std::string& project_dir) {
  static const std::regex re(R"(v(\d+))");
  std::vector<int> out;
  std::error_code ec;
  if (!fs::is_directory(project_dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(project_dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (e.is_directory() && std::regex_match(name, m, re)) out.push_back(std::stoi(m[1].str()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

VersionDir next_version(const std::string& project_dir) {
  fs::create_directories(project_dir);
  const auto versions = existing_versions(project_dir);
  VersionDir v;
  v.number = versions.empty() ? 1 : versions.back() + 1;
  char buf[16];
  std::snprintf(buf, sizeof buf, "v%03d", v.number);
  v.name = buf;
  const fs::path p = fs::path(project_dir) / v.name;
  if (!fs::create_directory(p)) throw Error("version directory already exists: " + p.string());
  v.path = absolute_normal(p.string());
  return v;
}

ExecutionOutcome execute(const std::string& script_source, const std::string& iteration_dir,
                         const RuntimeConfig& runtime) {
  runtime.validate();
  if (!is_contained(runtime.workdir_root, iteration_dir)) {
    throw ContainmentError("iteration directory outside the workdir root: " + iteration_dir);
  }
  const fs::path dir = absolute_normal(iteration_dir);
  fs::create_directories(dir);
  const fs::path script = dir / runtime.script_name;
  if (fs::exists(script)) throw Error("code state already written: " + script.string());
  write_file(script.string(), script_source);

  ProcessSpec spec;
  bool placed = false;
  for (const auto& tok : runtime.interpreter_command) {
    if (tok == "{script}") {
      spec.argv.push_back(script.string());
      placed = true;
    } else {
      spec.argv.push_back(tok);
    }
  }
  if (!placed) spec.argv.push_back(script.string());
  spec.cwd = dir.string();
  spec.env = allowlisted_environment(runtime.env_allowlist);
  spec.env["SCILOOP_WORKDIR_ROOT"] = absolute_normal(runtime.workdir_root);
  spec.timeout_seconds = runtime.timeout_seconds;
  spec.stdout_path = (dir / kStdoutFile).string();
  spec.stderr_path = (dir / kStderrFile).string();

  const ProcessResult r = run_process(spec);
  ExecutionOutcome out;
  out.exit_code = r.exit_code;
  out.timed_out = r.timed_out;
  out.duration_seconds = r.duration_seconds;
  out.stdout_path = spec.stdout_path;
  out.stderr_path = spec.stderr_path;
  out.workdir = dir.string();

  const fs::path metrics = dir / kMetricsFile;
  if (fs::exists(metrics)) {
    try {
      const Json j = Json::parse(read_file(metrics.string()));
      if (!j.is_object()) throw InvariantError("metrics.json must hold an object");
      for (const auto& [k, v] : j.items()) {
        if (v.is_number()) out.metrics[k] = v.get<double>();
      }
    } catch (const std::exception& e) {
      out.metrics_error = e.what();
    }
  }
  return out;
}

ArtifactManifest collect_artifacts(const std::string& dir, const std::vector<std::string>& patterns,
                                   const std::vector<std::string>& expected) {
  ArtifactManifest m;
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    const fs::path base = absolute_normal(dir);
    for (const auto& e : fs::recursive_directory_iterator(base)) {
      if (!e.is_regular_file()) continue;
      const std::string rel = fs::relative(e.path(), base).generic_string();
      const std::string file = e.path().filename().string();
      const bool hit = std::any_of(patterns.begin(), patterns.end(), [&](const std::string& p) {
        return glob_match(p, rel) || glob_match(p, file);
      });
      if (!hit) continue;
      const std::string bytes = read_file(e.path().string());
      m.entries.push_back({rel, e.path().string(), bytes.size(), sha256_hex(bytes)});
    }
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ArtifactEntry& a, const ArtifactEntry& b) { return a.name < b.name; });
  for (const auto& p : expected) {
    if (!m.matches(p)) m.missing.push_back(p);
  }
  return m;
}

Json DebugReport::to_json() const {
  return Json{{"error_class", error_class},
              {"suspect_cells", suspect_cells},
              {"fix_directive", fix_directive},
              {"from_backend", from_backend}};
}

std::string log_excerpt(const ExecutionOutcome& outcome, std::size_t max_chars) {
  std::string text = read_if_exists(outcome.stderr_path);
  if (trim(text).empty()) text = read_if_exists(outcome.stdout_path);
  return tail(text, max_chars);
}

std::vector<int> traceback_cells(const std::string& log, const cells::CellScript& script,
                                 const std::string& script_name) {
  const std::string name = regex_escape(script_name);
  const std::regex python("File \"[^\"]*" + name + "\", line (\\d+)");
  const std::regex generic(name + ":(\\d+)");
  std::vector<std::pair<std::size_t, int>> hits;  // position, line
  for (const auto* re : {&python, &generic}) {
    for (auto it = std::sregex_iterator(log.begin(), log.end(), *re); it != std::sregex_iterator();
         ++it) {
      hits.emplace_back(static_cast<std::size_t>(it->position(0)), std::stoi((*it)[1].str()));
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<int> out;
  for (const auto& [pos, line] : hits) {
    const int cell = script.cell_at_line(line);
    if (cell >= 0 && std::find(out.begin(), out.end(), cell) == out.end()) out.push_back(cell);
  }
  return out;
}

std::string error_class_of(const std::string& log) {
  static const std::regex re(R"(\b(\w+(?:Error|Exception))\b)");
  std::string last;
  for (auto it = std::sregex_iterator(log.begin(), log.end(), re); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str();
  }
  return last;
}

DebugReport debug_report(const ExecutionOutcome& outcome, const cells::CellScript& script,
                         llm::Backend& backend, const std::string& system_prompt,
                         const std::string& script_name) {
  if (outcome.exit_code == 0 && !outcome.timed_out) {
    throw InvariantError("debug_report needs a failed run");
  }
  DebugReport report;
  const std::string excerpt = log_excerpt(outcome);
  if (outcome.timed_out) {
    report.error_class = "timeout";
    report.fix_directive = "The run was killed after exceeding the wall-clock limit of " +
                           format_seconds(outcome.duration_seconds) +
                           " s. Reduce the work per run: fewer epochs or steps, a coarser grid, "
                           "smaller batches, or an early-stopping criterion.";
    return report;
  }
  const std::vector<int> traced = traceback_cells(excerpt, script, script_name);
  const std::string traced_class = error_class_of(excerpt);
  const int n = static_cast<int>(script.cells.size());

  llm::ChatRequest req;
  req.role_id = "debugger";
  req.system_prompt = system_prompt;
  std::string msg = "## Exit code\n" + std::to_string(outcome.exit_code) + "\n\n## Error output\n" +
                    excerpt + "\n\n## Script\n" + script.numbered();
  if (!traced.empty()) {
    msg += "\n## Cells named in the traceback\n";
    for (int c : traced) msg += std::to_string(c) + " ";
    msg += "\n";
  }
  req.messages.push_back({"user", msg});
  req.response_schema = "debug_report";
  try {
    report = llm::ask_structured<DebugReport>(backend, req, [&](const Json& j) {
      DebugReport r;
      r.error_class = require_string(j, "error_class");
      r.fix_directive = trim(require_string(j, "fix_directive"));
      if (r.fix_directive.empty()) throw InvariantError("fix_directive must not be empty");
      if (j.contains("suspect_cells") && j["suspect_cells"].is_array()) {
        for (const auto& c : j["suspect_cells"]) {
          if (!c.is_number_integer()) throw InvariantError("suspect_cells must hold integers");
          r.suspect_cells.push_back(c.get<int>());
        }
      }
      r.from_backend = true;
      return r;
    });
  } catch (const llm::SchemaError&) {
    report = DebugReport{};
    report.fix_directive = "inspect stderr excerpt and fix the failing cell:\n" + excerpt;
  }
  std::vector<int> suspects = traced;
  for (int c : report.suspect_cells) {
    if (c >= 0 && c < n && std::find(suspects.begin(), suspects.end(), c) == suspects.end()) {
      suspects.push_back(c);
    }
  }
  report.suspect_cells = suspects;
  if (report.error_class.empty()) report.error_class = traced_class.empty() ? "unknown" : traced_class;
  return report;
}

}  // namespace sciloop::sandbox
