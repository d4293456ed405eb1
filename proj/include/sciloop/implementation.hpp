#pragma once

// Implementation operator: turns an accepted strategy into a code state by
// planning target cells, patching them one at a time and auditing the result.

#include <optional>
#include <string>
#include <vector>

#include "sciloop/cells.hpp"
#include "sciloop/code_store.hpp"
#include "sciloop/llm.hpp"
#include "sciloop/policy.hpp"

namespace sciloop::impl {

/// What the planner is asked to realise: a strategy, a debug fix, or the
/// inspector's violations.
struct Directive {
  std::string text;
  std::vector<int> suspect_cells;  // cells that must be targeted when in range
};

struct CellTarget {
  int cell_index = 0;
  std::string intent;
  bool operator==(const CellTarget&) const = default;
};

struct CellPlan {
  std::vector<CellTarget> targets;  // unique indices, ascending
  std::vector<std::string> repairs;
  std::string study;  // planner free text
};

struct Prompts {
  std::string planner;
  std::string planner_parser;
  std::string patcher;
  std::string inspector;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Planner study followed by the planner parser. Out-of-range cells are
/// dropped, duplicate cells merged, suspect cells added, and the list capped
/// at `max_targets`; every change is noted in `repairs`.
CellPlan plan_targets(const Directive& directive, const cells::CellScript& script,
                      llm::Backend& backend, const Prompts& prompts, int max_targets = 8);

/// Patcher call for one cell. An empty intent yields an empty patch without a
/// call. A patch that fails validation is re-asked once, then PatchError.
cells::CellPatch emit_patch(const cells::CellScript& script, int cell_index,
                            const std::string& intent, llm::Backend& backend,
                            const std::string& patcher_prompt);

struct Violation {
  std::string requirement;
  std::string evidence;
  bool operator==(const Violation&) const = default;
};

struct InspectionVerdict {
  bool faithful = true;
  std::vector<Violation> violations;
  bool backend_failure = false;
};

/// Deterministic module presence check merged with the inspector's audit. An
/// unusable inspector reply counts as unfaithful.
InspectionVerdict inspect(const cells::CellScript& script, const policy::StrategyReport& strategy,
                          llm::Backend& backend, const std::string& inspector_prompt);

struct CodeState {
  cells::CellScript script;
  std::string source;
  std::string sha256;
  bool fresh = false;       // assembled from the template
  bool unfaithful = false;  // inspection cap reached without a faithful verdict
  int inspections = 0;
  std::vector<cells::CellPatch> patches;
  std::vector<std::string> notes;
};

struct ImplementInput {
  const policy::StrategyReport* strategy = nullptr;
  std::string template_source;
  std::vector<store::ModuleRecord> modules;  // dependency order
  std::optional<std::string> prior_source;
  std::optional<bandit::Action> prior_action;
  std::string delimiter_pattern = cells::kDefaultDelimiter;
  int max_inspections = 2;
  int max_targets = 8;
};

/// Adds one `module:<id>` cell per module before the first cell, skipping
/// modules already present.
cells::CellScript insert_module_cells(cells::CellScript script,
                                      const std::vector<store::ModuleRecord>& modules);

/// The strategy rendered as a planner directive.
Directive strategy_directive(const policy::StrategyReport& strategy);

/// parse -> plan -> patch -> inspect, with one repair round per unfaithful
/// verdict until `max_inspections` audits were spent. Structural actions (or no
/// prior script) start from the template; tuning actions patch the prior script.
CodeState implement(const ImplementInput& input, llm::Backend& backend, const Prompts& prompts);

/// Plan and patch `state` against `directive` without inspection (debug fixes).
CodeState repair(const CodeState& state, const Directive& directive, llm::Backend& backend,
                 const Prompts& prompts, int max_targets = 8);

}  // namespace sciloop::impl
