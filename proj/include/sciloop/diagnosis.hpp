#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sciloop {

/// Advisor-assigned grades. Bounds: details and optimality in [0,15],
/// consistency in [0,1] (fraction of constraints satisfied).
struct AdvisorGrades {
  double details_grade = 0.0;
  double optimality_grade = 0.0;
  double consistency_grade = 0.0;
  std::string rationale;

  /// Validating constructor; throws InvariantError naming the field.
  static AdvisorGrades make(double details, double optimality, double consistency,
                            std::string rationale = {});
  /// Clamps each field into bounds (NaN becomes 0).
  static AdvisorGrades clamped(double details, double optimality, double consistency,
                               std::string rationale = {});

  bool operator==(const AdvisorGrades&) const = default;
};

enum class Verdict { continue_loop, revert_to, stop_success, stop_exhausted };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct StructuredDiagnosis {
  std::vector<std::string> failure_modes;
  std::string prescribed_cure;
  AdvisorGrades grades;
  Verdict verdict = Verdict::continue_loop;
  std::optional<int> revert_iteration;  // set iff verdict == revert_to
  std::map<std::string, std::string> extras;

  bool operator==(const StructuredDiagnosis&) const = default;
};

}  // namespace sciloop
