#include "sciloop/experiment_log.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sciloop/policy.hpp"

namespace fs = std::filesystem;

namespace sciloop::explog {

namespace {

Json string_map(const std::map<std::string, std::string>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, std::string> read_string_map(const Json& j, const char* key) {
  std::map<std::string, std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_object()) throw InvariantError(std::string("'") + key + "' must be an object");
  for (const auto& [k, v] : j[key].items()) {
    if (!v.is_string()) throw InvariantError(std::string("'") + key + "." + k + "' must be a string");
    out[k] = v.get<std::string>();
  }
  return out;
}

const Json& require_object(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_object()) {
    throw InvariantError(std::string("missing object field '") + key + "'");
  }
  return j[key];
}

Millis require_millis(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw InvariantError(std::string("missing integer field '") + key + "'");
  }
  return j[key].get<Millis>();
}

}  // namespace

LogCorruptError::LogCorruptError(std::size_t line, const std::string& message)
    : Error("log line " + std::to_string(line) + ": " + message), line_(line) {}

Json record_to_json(const bandit::TrialRecord& r, const std::string& session_id) {
  Json metrics = Json::object();
  for (const auto& [k, v] : r.observation.metrics) metrics[k] = v;
  return Json{
      {"schema_version", kSchemaVersion},
      {"session_id", session_id},
      {"iteration", r.iteration},
      {"step", r.step},
      {"action",
       {{"rep", r.action.rep},
        {"constraint", r.action.constraint},
        {"opt", r.action.opt},
        {"free_text_plan", r.action.free_text_plan},
        {"iteration", r.action.iteration}}},
      {"code_state", {{"path", r.code_state.path}, {"sha256", r.code_state.sha256}}},
      {"observation",
       {{"exit_code", r.observation.exit_code},
        {"log_excerpt", r.observation.log_excerpt},
        {"metrics", metrics},
        {"artifact_paths", r.observation.artifact_paths}}},
      {"reward",
       {{"integrity", r.reward.integrity()},
        {"accuracy", r.reward.accuracy()},
        {"precision_sub", r.reward.precision_sub()},
        {"consistency_sub", r.reward.consistency_sub()},
        {"details", r.reward.details()},
        {"optimality", r.reward.optimality()},
        {"total", bandit::reward_total(r.reward)}}},
      {"diagnosis", policy::diagnosis_to_json(r.diagnosis)},
      {"started_ms", r.started_ms},
      {"ended_ms", r.ended_ms},
      {"extras", string_map(r.extras)}};
}

bandit::TrialRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw InvariantError("record must be a JSON object");
  const int version = require_int(j, "schema_version");
  if (version != kSchemaVersion) {
    throw InvariantError("unsupported schema_version " + std::to_string(version));
  }
  bandit::TrialRecord r;
  r.iteration = require_int(j, "iteration");
  r.step = require_int(j, "step");
  const Json& a = require_object(j, "action");
  r.action.rep = require_string(a, "rep");
  r.action.constraint = require_string(a, "constraint");
  r.action.opt = require_string(a, "opt");
  r.action.free_text_plan = require_string(a, "free_text_plan");
  r.action.iteration = require_int(a, "iteration");
  const Json& c = require_object(j, "code_state");
  r.code_state.path = require_string(c, "path");
  r.code_state.sha256 = require_string(c, "sha256");
  const Json& o = require_object(j, "observation");
  r.observation.exit_code = require_int(o, "exit_code");
  r.observation.log_excerpt = require_string(o, "log_excerpt");
  for (const auto& [k, v] : require_object(o, "metrics").items()) {
    if (!v.is_number()) throw InvariantError("metric '" + k + "' must be a number");
    r.observation.metrics[k] = v.get<double>();
  }
  r.observation.artifact_paths = string_list(o, "artifact_paths");
  const Json& w = require_object(j, "reward");
  r.reward = bandit::RewardBreakdown::make(
      require_number(w, "integrity"), require_number(w, "accuracy"), require_number(w, "details"),
      require_number(w, "optimality"), require_number(w, "precision_sub"),
      require_number(w, "consistency_sub"));
  if (w.contains("total") && require_number(w, "total") != bandit::reward_total(r.reward)) {
    throw InvariantError("reward.total disagrees with its components");
  }
  r.diagnosis = policy::diagnosis_from_json(require_object(j, "diagnosis"), std::max(1, r.iteration));
  r.started_ms = require_millis(j, "started_ms");
  r.ended_ms = require_millis(j, "ended_ms");
  r.extras = read_string_map(j, "extras");
  return r;
}

std::string serialize_line(const bandit::TrialRecord& record, const std::string& session_id) {
  return record_to_json(record, session_id).dump() + "\n";
}

TrialLog::TrialLog(std::string path, std::string session_id)
    : path_(std::move(path)), session_id_(std::move(session_id)) {
  std::error_code ec;
  if (fs::exists(path_, ec)) {
    for (const auto& l : split_lines(read_file(path_))) {
      if (!trim(l).empty()) ++lines_;
    }
  } else {
    write_file(path_, "");
  }
}

void TrialLog::append(const bandit::TrialRecord& record) {
  const std::string line = serialize_line(record, session_id_);
  std::lock_guard<std::mutex> lock(mu_);
  if (record.iteration != static_cast<int>(lines_) + 1) {
    throw InvariantError("trial log expects iteration " + std::to_string(lines_ + 1) + ", got " +
                         std::to_string(record.iteration));
  }
  std::string current = read_file(path_);
  if (!current.empty() && current.back() != '\n') current += '\n';
  write_file_atomic(path_, current + line);
  ++lines_;
}

std::size_t TrialLog::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return lines_;
}

ReplayResult replay(const std::string& path, bool partial) {
  const std::string bytes = read_file(path);
  ReplayResult out;
  const auto lines = split_lines(bytes);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t number = i + 1;
    if (trim(lines[i]).empty()) continue;
    try {
      const Json j = Json::parse(lines[i]);
      bandit::TrialRecord r = record_from_json(j);
      const std::string sid = require_string(j, "session_id");
      if (out.history.empty() && out.history.session_id().empty()) {
        out.history = bandit::TrialHistory(sid);
      } else if (sid != out.history.session_id()) {
        throw InvariantError("session_id changes within the log");
      }
      out.history.append(std::move(r));
    } catch (const std::exception& e) {
      if (!partial) throw LogCorruptError(number, e.what());
      out.warnings.push_back("stopped at corrupt line " + std::to_string(number) + ": " + e.what());
      break;
    }
  }
  return out;
}

Json LogReport::to_json() const {
  return Json{{"rewards", rewards},
              {"deltas", deltas},
              {"r_star", r_star},
              {"regret", regret},
              {"best_observed_regret", best_observed_regret},
              {"best_iteration", best_iteration},
              {"best_reward", best_reward}};
}

LogReport report(const std::string& path, double r_star) {
  const ReplayResult rr = replay(path);
  LogReport rep;
  rep.r_star = r_star;
  rep.rewards = rr.history.totals();
  if (rep.rewards.empty()) throw Error("log holds no trials: " + path);
  if (rep.rewards.size() >= 2) rep.deltas = bandit::submartingale_deltas(rr.history);
  rep.regret = bandit::empirical_regret(rr.history, r_star);
  rep.best_observed_regret = bandit::best_observed_regret(rr.history);
  const auto best = std::max_element(rep.rewards.begin(), rep.rewards.end());
  rep.best_iteration = static_cast<int>(best - rep.rewards.begin()) + 1;
  rep.best_reward = *best;
  return rep;
}

std::string format_report(const LogReport& r) {
  std::ostringstream s;
  s << "trials: " << r.rewards.size() << "\n";
  s << "rewards:";
  for (double v : r.rewards) s << " " << v;
  s << "\ndeltas:";
  for (double v : r.deltas) s << " " << v;
  s << "\nregret (r*=" << r.r_star << "): " << r.regret << "\n";
  s << "regret (r*=best observed " << r.best_reward << "): " << r.best_observed_regret << "\n";
  s << "best iteration: " << r.best_iteration << "\n";
  return s.str();
}

}  // namespace sciloop::explog
