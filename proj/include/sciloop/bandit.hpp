#pragma once

// Online-learning bookkeeping for the research loop: the combinatorial action
// space, per-iteration trial records, and regret / reward-delta accounting.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sciloop/common.hpp"
#include "sciloop/diagnosis.hpp"

namespace sciloop::bandit {

enum class Axis { rep, constraint, opt };
std::string to_string(Axis a);

/// rep × constraint × opt. Each list is non-empty with unique identifiers.
class ActionSpace {
 public:
  ActionSpace() = default;
  /// Throws InvariantError on an empty list or duplicate identifier.
  ActionSpace(std::vector<std::string> rep, std::vector<std::string> constraint,
              std::vector<std::string> opt);

  const std::vector<std::string>& rep_options() const { return rep_; }
  const std::vector<std::string>& constraint_options() const { return constraint_; }
  const std::vector<std::string>& opt_options() const { return opt_; }
  const std::vector<std::string>& options(Axis a) const;

  std::size_t size() const { return rep_.size() * constraint_.size() * opt_.size(); }
  bool empty() const { return rep_.empty(); }

  /// One line per axis, used verbatim inside system prompts.
  std::string describe() const;

  bool operator==(const ActionSpace&) const = default;

 private:
  std::vector<std::string> rep_;
  std::vector<std::string> constraint_;
  std::vector<std::string> opt_;
};

struct Action {
  std::string rep;
  std::string constraint;
  std::string opt;
  std::string free_text_plan;
  int iteration = 0;

  /// A structural change is a change of representation or constraint strategy.
  bool structurally_differs(const Action& other) const {
    return rep != other.rep || constraint != other.constraint;
  }
  bool operator==(const Action&) const = default;
};

class UnknownIdentifierError : public Error {
 public:
  UnknownIdentifierError(Axis axis, std::string id);
  Axis axis() const { return axis_; }
  const std::string& identifier() const { return id_; }

 private:
  Axis axis_;
  std::string id_;
};

/// Throws UnknownIdentifierError for the first axis whose identifier is not
/// a member of the corresponding option list.
void validate_action(const Action& action, const ActionSpace& space);

struct Observation {
  int exit_code = 0;
  std::string log_excerpt;
  std::map<std::string, double> metrics;
  std::vector<std::string> artifact_paths;  // relative to the workdir root

  bool operator==(const Observation&) const = default;
};

inline constexpr double kIntegrityCap = 35.0;
inline constexpr double kAccuracyCap = 35.0;
inline constexpr double kDetailsCap = 15.0;
inline constexpr double kOptimalityCap = 15.0;
inline constexpr double kMaxReward = 100.0;

/// The four-axis composite score. Built only through make(), which enforces
/// the caps and accuracy == precision_sub + consistency_sub.
class RewardBreakdown {
 public:
  RewardBreakdown() = default;
  static RewardBreakdown make(double integrity, double accuracy, double details,
                              double optimality, double precision_sub, double consistency_sub);

  double integrity() const { return integrity_; }
  double accuracy() const { return accuracy_; }
  double details() const { return details_; }
  double optimality() const { return optimality_; }
  double precision_sub() const { return precision_sub_; }
  double consistency_sub() const { return consistency_sub_; }

  bool operator==(const RewardBreakdown&) const = default;

 private:
  double integrity_ = 0.0;
  double accuracy_ = 0.0;
  double details_ = 0.0;
  double optimality_ = 0.0;
  double precision_sub_ = 0.0;
  double consistency_sub_ = 0.0;
};

/// Exact sum of the four axes.
double reward_total(const RewardBreakdown& r);

struct CodeStateRef {
  std::string path;  // relative to the workdir root
  std::string sha256;
  bool operator==(const CodeStateRef&) const = default;
};

struct TrialRecord {
  int iteration = 0;
  int step = 0;  // routing step this trial belongs to
  Action action;
  CodeStateRef code_state;
  Observation observation;
  RewardBreakdown reward;
  StructuredDiagnosis diagnosis;
  Millis started_ms = 0;
  Millis ended_ms = 0;
  std::map<std::string, std::string> extras;

  bool operator==(const TrialRecord&) const = default;
};

/// Append-only; iterations are contiguous from 1.
class TrialHistory {
 public:
  TrialHistory() = default;
  explicit TrialHistory(std::string session_id) : session_id_(std::move(session_id)) {}

  const std::string& session_id() const { return session_id_; }
  const std::vector<TrialRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const TrialRecord& back() const { return records_.back(); }
  const TrialRecord& at_iteration(int iteration) const;
  int next_iteration() const { return static_cast<int>(records_.size()) + 1; }

  /// Throws InvariantError unless record.iteration == next_iteration().
  void append(TrialRecord record);

  std::vector<double> totals() const;

  bool operator==(const TrialHistory&) const = default;

 private:
  std::string session_id_;
  std::vector<TrialRecord> records_;
};

/// Σ (r_star − R_t). Throws on an empty sequence or r_star below the max.
double empirical_regret(std::span<const double> rewards, double r_star);
double empirical_regret(const TrialHistory& history, double r_star = kMaxReward);
/// Regret against the best reward actually observed.
double best_observed_regret(const TrialHistory& history);

/// R_{n+1} − R_n for consecutive entries; needs at least two.
std::vector<double> submartingale_deltas(std::span<const double> rewards);
std::vector<double> submartingale_deltas(const TrialHistory& history);

}  // namespace sciloop::bandit
