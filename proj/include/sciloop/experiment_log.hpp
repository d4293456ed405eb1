#pragma once

// Canonical JSONL persistence of trial records, replay, and regret reports.
//
// Each line is one TrialRecord with a fixed key order and a schema_version,
// so write -> replay -> write is byte-identical.

#include <mutex>
#include <string>
#include <vector>

#include "sciloop/bandit.hpp"
#include "sciloop/json_io.hpp"

namespace sciloop::explog {

inline constexpr int kSchemaVersion = 1;

Json record_to_json(const bandit::TrialRecord& record, const std::string& session_id);
/// Strict inverse of record_to_json. Throws InvariantError on a bad field.
bandit::TrialRecord record_from_json(const Json& j);
/// One canonical line including the trailing newline.
std::string serialize_line(const bandit::TrialRecord& record, const std::string& session_id);

class LogCorruptError : public Error {
 public:
  LogCorruptError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Single-writer append-only log. Each append rewrites the file through a
/// temporary copy and a rename, so a crash leaves the previous contents intact.
class TrialLog {
 public:
  TrialLog(std::string path, std::string session_id);
  const std::string& path() const { return path_; }
  void append(const bandit::TrialRecord& record);
  std::size_t size() const;

 private:
  std::string path_;
  std::string session_id_;
  mutable std::mutex mu_;
  std::size_t lines_ = 0;
};

struct ReplayResult {
  bandit::TrialHistory history;
  std::vector<std::string> warnings;
};

/// Rebuilds the history. A corrupt line raises LogCorruptError; in partial
/// mode the records before it are returned with a warning instead.
ReplayResult replay(const std::string& path, bool partial = false);

struct LogReport {
  std::vector<double> rewards;
  std::vector<double> deltas;
  double r_star = bandit::kMaxReward;
  double regret = 0.0;          // against r_star
  double best_observed_regret = 0.0;
  int best_iteration = 0;       // 1-based, first of equal maxima
  double best_reward = 0.0;
  Json to_json() const;
};

LogReport report(const std::string& path, double r_star = bandit::kMaxReward);
std::string format_report(const LogReport& r);

}  // namespace sciloop::explog
