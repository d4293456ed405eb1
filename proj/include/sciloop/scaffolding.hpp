#pragma once

// Blueprint registry and system-prompt composition for every agent role.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sciloop/bandit.hpp"
#include "sciloop/llm.hpp"

namespace sciloop::scaffolding {

/// The five blueprint ids, in canonical prompt order.
const std::vector<std::string>& blueprint_ids();
/// Generative groups plus "storage" and "general" (no blueprints).
const std::vector<std::string>& group_ids();
const std::vector<std::string>& role_ids();

struct Blueprint {
  std::string id;
  std::string body;
  std::vector<std::string> applicable_groups;
};

class MissingBlueprintError : public Error {
 public:
  explicit MissingBlueprintError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class BlueprintRegistry {
 public:
  /// Throws InvariantError if any of the five ids is absent or a body is empty.
  explicit BlueprintRegistry(std::vector<Blueprint> blueprints);

  const Blueprint& get(const std::string& id) const;
  /// Blueprints applicable to `group`, in canonical order.
  std::vector<const Blueprint*> for_group(const std::string& group) const;
  std::size_t size() const { return by_id_.size(); }

 private:
  std::map<std::string, Blueprint> by_id_;
};

/// Reads `<dir>/<id>.md` for each id. A leading "groups: a, b" line sets the
/// applicable groups; otherwise the built-in mapping is used.
BlueprintRegistry load_blueprints(const std::string& directory);

struct PromptBundle {
  std::string system_prompt;
  std::size_t context_budget = 0;  // estimated tokens of system_prompt
  std::vector<std::string> included_blueprints;
};

struct PromptOptions {
  std::string extra_rules;
  std::optional<bandit::ActionSpace> action_space;
  std::size_t budget_tokens = 8000;
};

/// role charter + group blueprints + action-space axes + extra rules.
/// Throws InvariantError for an unknown role or group, or when the result
/// exceeds the budget.
PromptBundle compose_system_prompt(const std::string& role, const std::string& group,
                                   const BlueprintRegistry& registry,
                                   const PromptOptions& options = {});

/// One row per record: iteration, action, reward, verdict, cure.
std::string history_row(const bandit::TrialRecord& r);

struct SummaryOptions {
  std::size_t budget_tokens = 2000;
  std::size_t recent_verbatim = 5;
};

/// Compact table when it fits; otherwise the last `recent_verbatim` rows plus a
/// backend-written digest of the older rows (deterministic digest if the
/// backend fails). The result never exceeds the budget.
std::string summarize_history(const bandit::TrialHistory& history, llm::Backend* backend,
                              const SummaryOptions& options = {});

}  // namespace sciloop::scaffolding
