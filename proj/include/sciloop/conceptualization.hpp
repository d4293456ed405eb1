#pragma once

// Coordinator (request -> formal problem) and Gatekeeper (problem -> ordered
// group routing).

#include <optional>
#include <string>
#include <vector>

#include "sciloop/json_io.hpp"
#include "sciloop/llm.hpp"

namespace sciloop::concept_team {

struct ReferenceData {
  std::string path;
  std::string format_notes;
  bool operator==(const ReferenceData&) const = default;
};

enum class ProblemClass { forward, inverse };
std::string to_string(ProblemClass c);

struct FormalProblem {
  std::string title;
  std::string pde_or_task;
  std::string domain_spec;
  std::string boundary_conditions;
  std::string initial_conditions;
  std::optional<ReferenceData> reference_data;
  ProblemClass problem_class = ProblemClass::forward;
  std::vector<std::string> outputs_required;
  bool time_dependent = false;
  std::string character;    // elliptic | parabolic | hyperbolic | empty
  std::string method_hint;  // classical | piml | operator | empty
  bool ill_posed = false;
  std::vector<std::string> clarifications;  // open questions when ill-posed
  std::vector<std::string> assumptions;     // answers adopted in autonomous mode

  Json to_json() const;
  /// Strict: wrong types raise InvariantError naming the field.
  static FormalProblem from_json(const Json& j);
  /// Prompt-ready multi-line rendering.
  std::string describe() const;
  bool operator==(const FormalProblem&) const = default;
};

/// Accepts relative or absolute paths of printable characters with no
/// parent-directory components.
bool valid_reference_path(const std::string& path);

/// Rough classification from the equation text: hyperbolic, parabolic,
/// elliptic or empty when nothing matches.
std::string classify_character(const FormalProblem& p);

struct WellPosedness {
  bool ill_posed = false;
  std::vector<std::string> questions;
};

/// Checklist: boundary conditions for PDEs, enough of them for second-order
/// operators, initial conditions for time-dependent problems, and data for
/// inverse problems.
WellPosedness assess_well_posedness(const FormalProblem& p);

/// Coordinator call followed by the well-posedness checklist. Throws
/// llm::SchemaError after the re-ask budget.
FormalProblem formalize_request(const std::string& raw, llm::Backend& backend,
                                const std::string& system_prompt);

struct RoutingStep {
  std::string group;  // scic | sciml_piml | sciml_operator | storage
  FormalProblem problem;
  std::vector<std::string> consumes;
  std::vector<std::string> produces;
  bool operator==(const RoutingStep&) const = default;
};

struct RoutingDecision {
  std::vector<RoutingStep> steps;
  std::string rationale;
  std::vector<std::string> repairs;  // reorderings applied to the proposal
  bool from_fallback = false;        // heuristic route used after a backend failure

  std::vector<std::string> groups() const;
  Json to_json() const;
  static RoutingDecision from_json(const Json& j);
  bool operator==(const RoutingDecision&) const = default;
};

const std::vector<std::string>& routing_groups();

/// Unroutable request; carries the record a human reviews.
class EscalationError : public Error {
 public:
  EscalationError(std::string reason, std::string raw_reply);
  const std::string& reason() const { return reason_; }
  const std::string& raw_reply() const { return raw_; }

 private:
  std::string reason_;
  std::string raw_;
};

/// Stable topological order of steps by file dependencies. Throws
/// EscalationError on a cycle. Appends a note to `repairs` when reordering.
std::vector<RoutingStep> order_steps(std::vector<RoutingStep> steps,
                                     std::vector<std::string>& repairs);

/// Keyword route used when the gatekeeper cannot answer: classical by
/// default, learned groups only when the problem asks for them.
RoutingDecision heuristic_route(const FormalProblem& problem);

/// Gatekeeper call, validation and dependency ordering. Unknown groups or an
/// empty plan raise EscalationError; backend failures fall back to the
/// heuristic route.
RoutingDecision route(const FormalProblem& problem, llm::Backend& backend,
                      const std::string& system_prompt);

}  // namespace sciloop::concept_team
