#pragma once

// Composite scientific reward: integrity (35) + accuracy (35, split into
// precision and consistency) + details (15) + optimality (15).
//
// All scoring functions are pure and clamp their outputs, so any input,
// including NaN or negative error metrics, yields a total in [0, 100].

#include <map>
#include <string>
#include <vector>

#include "sciloop/bandit.hpp"
#include "sciloop/diagnosis.hpp"
#include "sciloop/execution_types.hpp"
#include "sciloop/json_io.hpp"

namespace sciloop::reward {

struct ScoringConfig {
  double epsilon = 1e-3;        // full precision credit at or below this error
  double precision_cap = 20.0;  // precision_cap + consistency_cap == 35
  double consistency_cap = 15.0;
  std::vector<std::string> required_artifacts;  // glob patterns
  std::string primary_metric = "rel_l2";

  /// Throws InvariantError if the caps do not sum to 35 or epsilon <= 0.
  void validate() const;
  /// Reads the documented keys; unknown keys are rejected by name.
  static ScoringConfig from_json(const Json& j);
  Json to_json() const;
};

inline constexpr double kCleanExitCredit = 20.0;
inline constexpr double kArtifactCredit = 15.0;

/// 0 on a crash or timeout; otherwise 20 plus up to 15 in proportion to the
/// required artifact patterns present in the manifest.
double score_integrity(const ExecutionOutcome& outcome, const ArtifactManifest& manifest,
                       const ScoringConfig& cfg);

/// Full credit at error <= epsilon, zero at error >= 10·epsilon, and
/// cap·log10(10·epsilon / error) in between.
double precision_credit(double error, const ScoringConfig& cfg);

struct AccuracyScore {
  double accuracy = 0.0;
  double precision_sub = 0.0;
  double consistency_sub = 0.0;
  bool missing_primary_metric = false;
};

AccuracyScore score_accuracy(const std::map<std::string, double>& metrics,
                             const AdvisorGrades& grades, const ScoringConfig& cfg);

/// Throws InvariantError naming the axis when an input is out of bounds.
bandit::RewardBreakdown compose_reward(double integrity, const AccuracyScore& accuracy,
                                       const AdvisorGrades& grades);

}  // namespace sciloop::reward
