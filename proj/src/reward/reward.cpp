#include "sciloop/reward.hpp"

#include <algorithm>
#include <cmath>

namespace sciloop {

bool ArtifactManifest::matches(const std::string& pattern) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const ArtifactEntry& e) { return glob_match(pattern, e.name); });
}

}  // namespace sciloop

namespace sciloop::reward {

void ScoringConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvariantError("scoring.epsilon must be positive");
  }
  if (!(precision_cap >= 0.0) || !(consistency_cap >= 0.0) ||
      std::fabs(precision_cap + consistency_cap - bandit::kAccuracyCap) > 1e-9) {
    throw InvariantError("scoring.precision_cap + scoring.consistency_cap must equal 35");
  }
  if (primary_metric.empty()) throw InvariantError("scoring.primary_metric must be set");
}

ScoringConfig ScoringConfig::from_json(const Json& j) {
  ScoringConfig cfg;
  if (!j.is_object()) throw InvariantError("scoring section must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "epsilon") {
      cfg.epsilon = value.get<double>();
    } else if (key == "precision_cap") {
      cfg.precision_cap = value.get<double>();
    } else if (key == "consistency_cap") {
      cfg.consistency_cap = value.get<double>();
    } else if (key == "required_artifacts") {
      cfg.required_artifacts = value.get<std::vector<std::string>>();
    } else if (key == "primary_metric") {
      cfg.primary_metric = value.get<std::string>();
    } else {
      throw InvariantError("unknown config key 'scoring." + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

Json ScoringConfig::to_json() const {
  return Json{{"epsilon", epsilon},
              {"precision_cap", precision_cap},
              {"consistency_cap", consistency_cap},
              {"required_artifacts", required_artifacts},
              {"primary_metric", primary_metric}};
}

double score_integrity(const ExecutionOutcome& outcome, const ArtifactManifest& manifest,
                       const ScoringConfig& cfg) {
  if (outcome.exit_code != 0 || outcome.timed_out) return 0.0;
  if (cfg.required_artifacts.empty()) return kCleanExitCredit + kArtifactCredit;
  std::size_t present = 0;
  for (const auto& pattern : cfg.required_artifacts) {
    if (manifest.matches(pattern)) ++present;
  }
  const double fraction =
      static_cast<double>(present) / static_cast<double>(cfg.required_artifacts.size());
  return std::clamp(kCleanExitCredit + kArtifactCredit * fraction, 0.0, bandit::kIntegrityCap);
}

double precision_credit(double error, const ScoringConfig& cfg) {
  if (std::isnan(error) || error < 0.0) return 0.0;
  if (error <= cfg.epsilon) return cfg.precision_cap;
  const double ceiling = 10.0 * cfg.epsilon;
  if (error >= ceiling) return 0.0;
  return std::clamp(cfg.precision_cap * std::log10(ceiling / error), 0.0, cfg.precision_cap);
}

AccuracyScore score_accuracy(const std::map<std::string, double>& metrics,
                             const AdvisorGrades& grades, const ScoringConfig& cfg) {
  AccuracyScore out;
  auto it = metrics.find(cfg.primary_metric);
  if (it == metrics.end() || std::isnan(it->second) || it->second < 0.0) {
    out.missing_primary_metric = true;
    out.precision_sub = 0.0;
  } else {
    out.precision_sub = precision_credit(it->second, cfg);
  }
  double consistency = grades.consistency_grade;
  if (std::isnan(consistency)) consistency = 0.0;
  out.consistency_sub = cfg.consistency_cap * std::clamp(consistency, 0.0, 1.0);
  out.accuracy = out.precision_sub + out.consistency_sub;
  return out;
}

bandit::RewardBreakdown compose_reward(double integrity, const AccuracyScore& accuracy,
                                       const AdvisorGrades& grades) {
  return bandit::RewardBreakdown::make(integrity, accuracy.accuracy, grades.details_grade,
                                       grades.optimality_grade, accuracy.precision_sub,
                                       accuracy.consistency_sub);
}

}  // namespace sciloop::reward
