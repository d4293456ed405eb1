#include "sciloop/policy.hpp"

#include <cmath>
#include <sstream>

namespace sciloop::policy {

namespace {

std::string optional_string(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_string()) throw InvariantError(std::string("expected string field '") + key + "'");
  return j[key].get<std::string>();
}

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  return out;
}

std::string format_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

Json Critique::to_json() const {
  return Json{{"verdict", accepted ? "accepted" : "rejected"},
              {"requirements", requirements},
              {"cited_principle", cited_principle}};
}

Critique Critique::from_json(const Json& j) {
  Critique c;
  const std::string verdict = to_lower(require_string(j, "verdict"));
  if (verdict == "accepted") c.accepted = true;
  else if (verdict == "rejected") c.accepted = false;
  else throw InvariantError("critique verdict must be accepted or rejected, got '" + verdict + "'");
  c.requirements = string_list(j, "requirements");
  c.cited_principle = optional_string(j, "cited_principle");
  if (!c.accepted && c.requirements.empty()) {
    throw InvariantError("a rejected critique must list at least one requirement");
  }
  return c;
}

Json StrategyReport::to_json() const {
  Json targets = Json::object();
  for (const auto& [k, v] : acceptance_targets) targets[k] = v;
  Json j{{"rep", action.rep},
         {"constraint", action.constraint},
         {"opt", action.opt},
         {"narrative", narrative},
         {"required_modules", required_modules},
         {"training_plan", training_plan},
         {"acceptance_targets", targets},
         {"force_accepted", force_accepted}};
  j["critique"] = attached_critique ? attached_critique->to_json() : Json(nullptr);
  return j;
}

StrategyReport StrategyReport::from_json(const Json& j, const bandit::ActionSpace& space) {
  StrategyReport r;
  r.action.rep = require_string(j, "rep");
  r.action.constraint = require_string(j, "constraint");
  r.action.opt = require_string(j, "opt");
  try {
    bandit::validate_action(r.action, space);
  } catch (const bandit::UnknownIdentifierError& e) {
    throw InvariantError(std::string(e.what()) + "; allowed values:\n" + space.describe());
  }
  r.narrative = require_string(j, "narrative");
  r.required_modules = string_list(j, "required_modules");
  r.training_plan = optional_string(j, "training_plan");
  if (j.contains("acceptance_targets") && !j["acceptance_targets"].is_null()) {
    if (!j["acceptance_targets"].is_object()) {
      throw InvariantError("acceptance_targets must map metric names to numbers");
    }
    for (const auto& [k, v] : j["acceptance_targets"].items()) {
      if (!v.is_number()) throw InvariantError("acceptance target '" + k + "' is not a number");
      r.acceptance_targets[k] = v.get<double>();
    }
  }
  r.force_accepted = j.value("force_accepted", false);
  r.action.free_text_plan = r.narrative;
  return r;
}

StrategyReport propose_strategy(const PolicyContext& ctx, llm::Backend& backend,
                                const std::vector<std::string>& requirements) {
  std::string msg = "## Problem\n" + ctx.problem_text + "\n\n## Iteration\n" +
                    std::to_string(ctx.iteration) + "\n";
  if (!trim(ctx.history_summary).empty()) msg += "\n## Trial history\n" + ctx.history_summary;
  if (ctx.prior_diagnosis) {
    msg += "\n## Latest diagnosis\nFailure modes:\n" + bullet_list(ctx.prior_diagnosis->failure_modes) +
           "Prescribed cure: " + ctx.prior_diagnosis->prescribed_cure + "\n";
  }
  if (!ctx.directives.empty()) msg += "\n## User directives (binding)\n" + bullet_list(ctx.directives);
  if (!requirements.empty()) {
    msg += "\n## Critic requirements from the previous round\n" + bullet_list(requirements);
  }
  llm::ChatRequest req;
  req.role_id = "strategist";
  req.system_prompt = ctx.strategist_prompt;
  req.messages.push_back({"user", msg});
  req.response_schema = "strategy_report";
  const auto& space = ctx.space;
  StrategyReport r = llm::ask_structured<StrategyReport>(
      backend, req, [&space](const Json& j) { return StrategyReport::from_json(j, space); });
  r.action.iteration = ctx.iteration;
  if (ctx.prior_diagnosis && !trim(ctx.prior_diagnosis->prescribed_cure).empty() &&
      !contains_icase(r.narrative, trim(ctx.prior_diagnosis->prescribed_cure))) {
    r.narrative += "\nAnswering diagnosis: " + trim(ctx.prior_diagnosis->prescribed_cure);
    r.action.free_text_plan = r.narrative;
  }
  return r;
}

Critique critique_strategy(const StrategyReport& report, const PolicyContext& ctx,
                           llm::Backend& backend) {
  std::string msg = "## Problem\n" + ctx.problem_text + "\n\n## Proposed strategy\n" +
                    report.to_json().dump(2) + "\n";
  if (!ctx.directives.empty()) msg += "\n## User directives (binding)\n" + bullet_list(ctx.directives);
  llm::ChatRequest req;
  req.role_id = "critic";
  req.system_prompt = ctx.critic_prompt;
  req.messages.push_back({"user", msg});
  req.response_schema = "critique";
  return llm::ask_structured<Critique>(backend, req,
                                       [](const Json& j) { return Critique::from_json(j); });
}

StrategyOutcome strategy_loop(const PolicyContext& ctx, llm::Backend& backend, int max_rounds,
                              const std::function<void(const StrategyRound&)>& on_round) {
  if (max_rounds < 1) throw InvariantError("strategy max_rounds must be at least 1");
  StrategyOutcome out;
  std::vector<std::string> requirements;
  for (int round = 1; round <= max_rounds; ++round) {
    StrategyRound r;
    r.report = propose_strategy(ctx, backend, requirements);
    r.critique = critique_strategy(r.report, ctx, backend);
    out.rounds.push_back(r);
    if (on_round) on_round(r);
    if (r.critique.accepted) {
      out.report = r.report;
      return out;
    }
    requirements = r.critique.requirements;
  }
  out.report = out.rounds.back().report;
  out.report.force_accepted = true;
  out.report.attached_critique = out.rounds.back().critique;
  return out;
}

StructuredDiagnosis rule_based_diagnosis(const bandit::Observation& observation,
                                         const reward::ScoringConfig& scoring) {
  StructuredDiagnosis d;
  d.extras["degraded"] = "true";
  d.grades = AdvisorGrades::make(0.0, 0.0, 0.0, "rule-based fallback; no qualitative grading");
  if (observation.exit_code != 0) {
    d.failure_modes.push_back("execution failed with exit code " +
                              std::to_string(observation.exit_code));
    d.prescribed_cure = "fix the runtime failure before changing the method";
    return d;
  }
  auto it = observation.metrics.find(scoring.primary_metric);
  if (it == observation.metrics.end()) {
    d.failure_modes.push_back("primary metric '" + scoring.primary_metric + "' was not reported");
    d.prescribed_cure = "write the primary metric to metrics.json";
  } else if (it->second > scoring.epsilon) {
    d.failure_modes.push_back(scoring.primary_metric + " = " + format_number(it->second) +
                              " is above the threshold " + format_number(scoring.epsilon));
    d.prescribed_cure = "reduce " + scoring.primary_metric;
  }
  return d;
}

AdvisorReport advise(const AdvisorInput& input, const StrategyReport& strategy,
                     llm::Backend& backend, const reward::ScoringConfig& scoring) {
  AdvisorReport out;
  std::string msg = "## Problem\n" + input.problem_text + "\n\n## Strategy\n" +
                    strategy.to_json().dump(2) + "\n\n## Exit code\n" +
                    std::to_string(input.observation.exit_code) + "\n\n## Metrics\n";
  for (const auto& [k, v] : input.observation.metrics) msg += k + " = " + format_number(v) + "\n";
  if (!trim(input.observation.log_excerpt).empty()) {
    msg += "\n## Log excerpt\n" + input.observation.log_excerpt + "\n";
  }
  if (!trim(input.history_summary).empty()) msg += "\n## Trial history\n" + input.history_summary;
  llm::ChatRequest req;
  req.role_id = "advisor";
  req.system_prompt = input.system_prompt;
  if (backend.supports_images("advisor")) {
    req.attachments = input.image_paths;
    out.attached_images = input.image_paths;
  } else if (!input.image_paths.empty()) {
    msg += "\n## Plots (not attached)\n" + bullet_list(input.observation.artifact_paths);
  }
  req.messages.push_back({"user", msg});
  try {
    out.text = backend.complete(req).text;
    if (trim(out.text).empty()) throw llm::ProviderError(200, "advisor returned empty text");
  } catch (const llm::MissingFixtureError&) {
    throw;
  } catch (const llm::BackendError&) {
    const StructuredDiagnosis d = rule_based_diagnosis(input.observation, scoring);
    out.degraded = true;
    out.attached_images.clear();
    out.text = "[degraded report] exit code " + std::to_string(input.observation.exit_code) + ". ";
    for (const auto& f : d.failure_modes) out.text += f + ". ";
    out.text += "Verdict: continue.";
  }
  return out;
}

Json diagnosis_to_json(const StructuredDiagnosis& d) {
  Json extras = Json::object();
  for (const auto& [k, v] : d.extras) extras[k] = v;
  return Json{{"failure_modes", d.failure_modes},
              {"prescribed_cure", d.prescribed_cure},
              {"grades",
               {{"details", d.grades.details_grade},
                {"optimality", d.grades.optimality_grade},
                {"consistency", d.grades.consistency_grade},
                {"rationale", d.grades.rationale}}},
              {"verdict", to_string(d.verdict)},
              {"revert_iteration",
               d.revert_iteration ? Json(*d.revert_iteration) : Json(nullptr)},
              {"extras", extras}};
}

StructuredDiagnosis diagnosis_from_json(const Json& j, int max_iteration) {
  if (!j.is_object()) throw InvariantError("diagnosis must be a JSON object");
  StructuredDiagnosis d;
  d.failure_modes = string_list(j, "failure_modes");
  d.prescribed_cure = optional_string(j, "prescribed_cure");
  if (!j.contains("grades") || !j["grades"].is_object()) {
    throw InvariantError("diagnosis needs a 'grades' object");
  }
  const Json& g = j["grades"];
  d.grades = AdvisorGrades::make(require_number(g, "details"), require_number(g, "optimality"),
                                 require_number(g, "consistency"), optional_string(g, "rationale"));
  d.verdict = verdict_from_string(require_string(j, "verdict"));
  if (d.verdict == Verdict::revert_to) {
    const int k = require_int(j, "revert_iteration");
    if (k < 1 || k > max_iteration) {
      throw InvariantError("revert_iteration " + std::to_string(k) +
                           " does not name an existing iteration (1.." +
                           std::to_string(max_iteration) + ")");
    }
    d.revert_iteration = k;
  }
  if (j.contains("extras") && j["extras"].is_object()) {
    for (const auto& [k, v] : j["extras"].items()) {
      d.extras[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return d;
}

StructuredDiagnosis parse_advisor(const std::string& raw, llm::Backend& backend,
                                  const std::string& system_prompt, int max_iteration) {
  if (trim(raw).empty()) throw InvariantError("advisor report is empty");
  llm::ChatRequest req;
  req.role_id = "advisor_parser";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", raw});
  req.response_schema = "structured_diagnosis";
  return llm::ask_structured<StructuredDiagnosis>(
      backend, req,
      [max_iteration](const Json& j) { return diagnosis_from_json(j, max_iteration); });
}

}  // namespace sciloop::policy
