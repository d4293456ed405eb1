#pragma once

// The policy operator: Strategist/Critic loop producing the next action, and
// the Advisor/Advisor Parser pair turning a run into a structured diagnosis.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sciloop/bandit.hpp"
#include "sciloop/diagnosis.hpp"
#include "sciloop/json_io.hpp"
#include "sciloop/llm.hpp"
#include "sciloop/reward.hpp"

namespace sciloop::policy {

struct Critique {
  bool accepted = false;
  std::vector<std::string> requirements;
  std::string cited_principle;

  Json to_json() const;
  /// Throws InvariantError when a rejection lists no requirements.
  static Critique from_json(const Json& j);
  bool operator==(const Critique&) const = default;
};

struct StrategyReport {
  bandit::Action action;
  std::string narrative;
  std::vector<std::string> required_modules;
  std::string training_plan;
  std::map<std::string, double> acceptance_targets;
  bool force_accepted = false;
  std::optional<Critique> attached_critique;  // set when force-accepted

  Json to_json() const;
  /// Validates the action against `space`; unknown identifiers raise
  /// InvariantError so the caller can re-ask.
  static StrategyReport from_json(const Json& j, const bandit::ActionSpace& space);
  bool operator==(const StrategyReport&) const = default;
};

struct PolicyContext {
  std::string strategist_prompt;
  std::string critic_prompt;
  std::string problem_text;
  std::string history_summary;
  std::optional<StructuredDiagnosis> prior_diagnosis;
  std::vector<std::string> directives;  // binding user directives
  bandit::ActionSpace space;
  int iteration = 1;
};

/// One Strategist call. `requirements` are the Critic's demands from the
/// previous round. The narrative is made to cite the prior cure when one exists.
StrategyReport propose_strategy(const PolicyContext& ctx, llm::Backend& backend,
                                const std::vector<std::string>& requirements = {});

Critique critique_strategy(const StrategyReport& report, const PolicyContext& ctx,
                           llm::Backend& backend);

struct StrategyRound {
  StrategyReport report;
  Critique critique;
};

struct StrategyOutcome {
  StrategyReport report;  // accepted, or force-accepted after max_rounds
  std::vector<StrategyRound> rounds;
};

/// Propose/critique until accepted or `max_rounds` proposals were rejected.
/// `on_round` observes every round as it completes.
StrategyOutcome strategy_loop(const PolicyContext& ctx, llm::Backend& backend, int max_rounds = 3,
                              const std::function<void(const StrategyRound&)>& on_round = {});

struct AdvisorInput {
  bandit::Observation observation;
  std::vector<std::string> image_paths;  // absolute paths of plot artifacts
  std::string history_summary;
  std::string problem_text;
  std::string system_prompt;
};

struct AdvisorReport {
  std::string text;
  bool degraded = false;
  std::vector<std::string> attached_images;
};

/// Advisor call; plots are attached only when the backend accepts images for
/// the advisor role. Backend failures produce a degraded rule-based report.
AdvisorReport advise(const AdvisorInput& input, const StrategyReport& strategy,
                     llm::Backend& backend, const reward::ScoringConfig& scoring);

/// Deterministic diagnosis from exit status and the primary metric alone.
StructuredDiagnosis rule_based_diagnosis(const bandit::Observation& observation,
                                         const reward::ScoringConfig& scoring);

/// Parses advisor-parser JSON. `max_iteration` bounds revert targets.
StructuredDiagnosis diagnosis_from_json(const Json& j, int max_iteration);
Json diagnosis_to_json(const StructuredDiagnosis& d);

/// Advisor Parser call with one re-ask; throws llm::SchemaError carrying the
/// raw reply when the second answer is still invalid.
StructuredDiagnosis parse_advisor(const std::string& raw, llm::Backend& backend,
                                  const std::string& system_prompt, int max_iteration);

}  // namespace sciloop::policy
