#include "sciloop/conceptualization.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

namespace sciloop::concept_team {

namespace {

std::string optional_string(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_string()) throw InvariantError(std::string("expected string field '") + key + "'");
  return j[key].get<std::string>();
}

bool optional_bool(const Json& j, const char* key, bool fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_boolean()) throw InvariantError(std::string("expected boolean field '") + key + "'");
  return j[key].get<bool>();
}

bool any_of_words(const std::string& lower, std::initializer_list<const char*> needles) {
  return std::any_of(needles.begin(), needles.end(),
                     [&](const char* n) { return lower.find(n) != std::string::npos; });
}

std::string problem_text(const FormalProblem& p) {
  return to_lower(p.title + "\n" + p.pde_or_task + "\n" + p.domain_spec);
}

bool looks_like_pde(const FormalProblem& p) {
  const std::string t = to_lower(p.pde_or_task);
  return any_of_words(t, {"u_t", "u_x", "_{t}", "_{x}", "\\partial", "∂", "nabla", "∇", "equation",
                          "pde", "u_{xx}", "u_xx", "u_tt"});
}

bool second_order_in_space(const FormalProblem& p) {
  const std::string t = to_lower(p.pde_or_task);
  return any_of_words(t, {"xx", "yy", "nabla^2", "∇²", "\\nabla^2", "laplac", "diffus", "viscous",
                          "poisson", "helmholtz", "navier", "heat", "wave"});
}

bool infer_time_dependent(const FormalProblem& p) {
  const std::string t = to_lower(p.pde_or_task + " " + p.domain_spec);
  return any_of_words(t, {"u_t", "_{t}", "u_tt", "\\partial_t", "∂t", "∂_t", "t \\in", "t in [",
                          "time interval", "time-dependent", "unsteady"});
}

std::size_t count_statements(const std::string& bcs) {
  std::size_t n = 1;
  const std::string t = to_lower(bcs);
  int depth = 0;
  for (char c : t) {
    if (c == '(' || c == '[') ++depth;
    if ((c == ')' || c == ']') && depth > 0) --depth;
    if (c == ';' || c == '\n' || (c == ',' && depth == 0)) ++n;
  }
  for (std::size_t pos = t.find(" and "); pos != std::string::npos; pos = t.find(" and ", pos + 1)) ++n;
  return n;
}

std::string basename_of(const std::string& path) {
  return std::filesystem::path(path).filename().string();
}

}  // namespace

std::string to_string(ProblemClass c) { return c == ProblemClass::forward ? "forward" : "inverse"; }

Json FormalProblem::to_json() const {
  Json ref = nullptr;
  if (reference_data) ref = Json{{"path", reference_data->path}, {"format_notes", reference_data->format_notes}};
  return Json{{"title", title},
              {"pde_or_task", pde_or_task},
              {"domain_spec", domain_spec},
              {"boundary_conditions", boundary_conditions},
              {"initial_conditions", initial_conditions},
              {"reference_data", ref},
              {"problem_class", to_string(problem_class)},
              {"outputs_required", outputs_required},
              {"time_dependent", time_dependent},
              {"character", character},
              {"method_hint", method_hint},
              {"ill_posed", ill_posed},
              {"clarifications", clarifications},
              {"assumptions", assumptions}};
}

FormalProblem FormalProblem::from_json(const Json& j) {
  if (!j.is_object()) throw InvariantError("formal problem must be a JSON object");
  FormalProblem p;
  p.title = require_string(j, "title");
  p.pde_or_task = require_string(j, "pde_or_task");
  p.domain_spec = optional_string(j, "domain_spec");
  p.boundary_conditions = optional_string(j, "boundary_conditions");
  p.initial_conditions = optional_string(j, "initial_conditions");
  if (j.contains("reference_data") && !j["reference_data"].is_null()) {
    const Json& r = j["reference_data"];
    ReferenceData ref;
    if (r.is_string()) {
      ref.path = r.get<std::string>();
    } else {
      ref.path = require_string(r, "path");
      ref.format_notes = optional_string(r, "format_notes");
    }
    if (!valid_reference_path(ref.path)) {
      throw InvariantError("reference_data.path '" + ref.path + "' is not a valid path");
    }
    p.reference_data = ref;
  }
  const std::string cls = optional_string(j, "problem_class");
  if (cls.empty() || cls == "forward") p.problem_class = ProblemClass::forward;
  else if (cls == "inverse") p.problem_class = ProblemClass::inverse;
  else throw InvariantError("problem_class must be forward or inverse, got '" + cls + "'");
  p.outputs_required = string_list(j, "outputs_required");
  p.character = to_lower(optional_string(j, "character"));
  if (!p.character.empty() && p.character != "elliptic" && p.character != "parabolic" &&
      p.character != "hyperbolic") {
    throw InvariantError("character must be elliptic, parabolic or hyperbolic");
  }
  p.method_hint = to_lower(optional_string(j, "method_hint"));
  p.time_dependent = optional_bool(j, "time_dependent", infer_time_dependent(p));
  p.ill_posed = optional_bool(j, "ill_posed", false);
  p.clarifications = string_list(j, "clarifications");
  p.assumptions = string_list(j, "assumptions");
  return p;
}

std::string FormalProblem::describe() const {
  std::string out = "Title: " + title + "\nProblem class: " + to_string(problem_class) +
                    "\nTask: " + pde_or_task;
  if (!domain_spec.empty()) out += "\nDomain: " + domain_spec;
  if (!boundary_conditions.empty()) out += "\nBoundary conditions: " + boundary_conditions;
  if (!initial_conditions.empty()) out += "\nInitial conditions: " + initial_conditions;
  if (!character.empty()) out += "\nCharacter: " + character;
  if (reference_data) {
    out += "\nReference data: " + reference_data->path;
    if (!reference_data->format_notes.empty()) out += " (" + reference_data->format_notes + ")";
  }
  if (!outputs_required.empty()) {
    out += "\nRequired outputs:";
    for (const auto& o : outputs_required) out += " " + o;
  }
  for (const auto& a : assumptions) out += "\nAssumption: " + a;
  return out;
}

bool valid_reference_path(const std::string& path) {
  if (trim(path).empty() || path.size() > 4096) return false;
  for (unsigned char c : path) {
    if (c < 0x20 || c == 0x7f) return false;
  }
  for (const auto& part : std::filesystem::path(path)) {
    if (part == "..") return false;
  }
  return true;
}

std::string classify_character(const FormalProblem& p) {
  if (!p.character.empty()) return p.character;
  const std::string t = problem_text(p);
  for (const char* c : {"hyperbolic", "parabolic", "elliptic"}) {
    if (t.find(c) != std::string::npos) return c;
  }
  if (any_of_words(t, {"poisson", "laplace", "helmholtz", "elasticity", "steady-state",
                       "steady state"})) {
    return "elliptic";
  }
  if (any_of_words(t, {"inviscid", "euler equations", "shock", "advection", "wave equation",
                       "conservation law", "u_tt"})) {
    return "hyperbolic";
  }
  if (any_of_words(t, {"heat", "diffusion", "viscous", "allen-cahn", "allen cahn", "u_xx",
                       "u_{xx}"})) {
    return "parabolic";
  }
  return {};
}

WellPosedness assess_well_posedness(const FormalProblem& p) {
  WellPosedness w;
  const bool pde = looks_like_pde(p);
  const std::string bcs = to_lower(p.boundary_conditions);
  if (p.problem_class == ProblemClass::forward && pde) {
    if (trim(bcs).empty()) {
      w.questions.push_back("Which boundary conditions hold on each boundary of the domain?");
    } else if (second_order_in_space(p) && bcs.find("periodic") == std::string::npos &&
               count_statements(bcs) < 2) {
      w.questions.push_back(
          "The operator is second order in space; which condition holds on the remaining "
          "boundary?");
    }
    if (p.time_dependent && trim(p.initial_conditions).empty()) {
      w.questions.push_back("What is the initial condition?");
    }
  }
  if (p.problem_class == ProblemClass::inverse && !p.reference_data &&
      to_lower(p.pde_or_task).find("data") == std::string::npos) {
    w.questions.push_back("Which observations constrain the unknown quantities?");
  }
  w.ill_posed = !w.questions.empty();
  return w;
}

FormalProblem formalize_request(const std::string& raw, llm::Backend& backend,
                                const std::string& system_prompt) {
  if (trim(raw).empty()) throw InvariantError("request text is empty");
  llm::ChatRequest req;
  req.role_id = "coordinator";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", raw});
  req.response_schema = "formal_problem";
  FormalProblem p = llm::ask_structured<FormalProblem>(
      backend, req, [](const Json& j) { return FormalProblem::from_json(j); });
  if (p.character.empty()) p.character = classify_character(p);
  const WellPosedness w = assess_well_posedness(p);
  for (const auto& q : w.questions) {
    if (std::find(p.clarifications.begin(), p.clarifications.end(), q) == p.clarifications.end()) {
      p.clarifications.push_back(q);
    }
  }
  p.ill_posed = p.ill_posed || w.ill_posed;
  return p;
}

const std::vector<std::string>& routing_groups() {
  static const std::vector<std::string> g = {"scic", "sciml_piml", "sciml_operator", "storage"};
  return g;
}

std::vector<std::string> RoutingDecision::groups() const {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.group);
  return out;
}

Json RoutingDecision::to_json() const {
  Json steps_j = Json::array();
  for (const auto& s : steps) {
    steps_j.push_back(Json{{"group", s.group},
                           {"problem", s.problem.to_json()},
                           {"consumes", s.consumes},
                           {"produces", s.produces}});
  }
  return Json{{"steps", steps_j},
              {"rationale", rationale},
              {"repairs", repairs},
              {"from_fallback", from_fallback}};
}

RoutingDecision RoutingDecision::from_json(const Json& j) {
  RoutingDecision d;
  for (const auto& s : j.at("steps")) {
    RoutingStep step;
    step.group = require_string(s, "group");
    step.problem = FormalProblem::from_json(s.at("problem"));
    step.consumes = string_list(s, "consumes");
    step.produces = string_list(s, "produces");
    d.steps.push_back(std::move(step));
  }
  d.rationale = j.value("rationale", "");
  d.repairs = string_list(j, "repairs");
  d.from_fallback = j.value("from_fallback", false);
  return d;
}

EscalationError::EscalationError(std::string reason, std::string raw_reply)
    : Error("request needs human review: " + reason),
      reason_(std::move(reason)),
      raw_(std::move(raw_reply)) {}

std::vector<RoutingStep> order_steps(std::vector<RoutingStep> steps,
                                     std::vector<std::string>& repairs) {
  const std::size_t n = steps.size();
  std::vector<std::set<std::size_t>> deps(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& c : steps[j].consumes) {
      for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        for (const auto& p : steps[i].produces) {
          if (basename_of(p) == basename_of(c)) deps[j].insert(i);
        }
      }
    }
  }
  std::vector<std::size_t> order;
  std::vector<bool> placed(n, false);
  while (order.size() < n) {
    bool progressed = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (placed[j]) continue;
      const bool ready = std::all_of(deps[j].begin(), deps[j].end(),
                                     [&](std::size_t i) { return placed[i]; });
      if (ready) {
        order.push_back(j);
        placed[j] = true;
        progressed = true;
        break;  // restart so the earliest ready step always goes first
      }
    }
    if (!progressed) throw EscalationError("routing steps have circular data dependencies", {});
  }
  std::vector<RoutingStep> out;
  bool moved = false;
  for (std::size_t k = 0; k < n; ++k) {
    if (order[k] != k) moved = true;
    out.push_back(std::move(steps[order[k]]));
  }
  if (moved) repairs.push_back("reordered steps so data producers run before consumers");
  return out;
}

RoutingDecision heuristic_route(const FormalProblem& problem) {
  const std::string t = problem_text(problem);
  RoutingDecision d;
  d.from_fallback = true;
  auto step = [&](const std::string& group) {
    RoutingStep s;
    s.group = group;
    s.problem = problem;
    return s;
  };
  if (any_of_words(t, {"velocimetry"})) {
    RoutingStep data = step("scic");
    data.produces = {"reference.npz"};
    RoutingStep inverse = step("sciml_piml");
    inverse.problem.problem_class = ProblemClass::inverse;
    inverse.consumes = {"reference.npz"};
    inverse.produces = {"results.npz"};
    RoutingStep verify = step("scic");
    verify.consumes = {"results.npz"};
    d.steps = {data, inverse, verify};
    d.rationale = "hybrid velocimetry workflow: generate data, infer, verify";
  } else if (problem.method_hint == "operator" ||
             any_of_words(t, {"operator network", "operator learning", "deeponet", "neural operator"})) {
    d.steps = {step("sciml_operator")};
    d.rationale = "request asks for an operator network";
  } else if (problem.method_hint == "piml" ||
             any_of_words(t, {"pinn", "physics-informed", "physics informed"})) {
    d.steps = {step("sciml_piml")};
    d.rationale = "request asks for a physics-informed network";
  } else {
    d.steps = {step("scic")};
    d.rationale = "no learned method requested; classical solver is the cheaper route";
  }
  return d;
}

RoutingDecision route(const FormalProblem& problem, llm::Backend& backend,
                      const std::string& system_prompt) {
  llm::ChatRequest req;
  req.role_id = "gatekeeper";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", problem.describe()});
  req.response_schema = "routing_decision";
  auto parse = [&problem](const Json& j) {
    if (!j.is_object() || !j.contains("steps") || !j["steps"].is_array()) {
      throw InvariantError("routing reply needs a 'steps' array");
    }
    RoutingDecision d;
    d.rationale = j.contains("rationale") && j["rationale"].is_string()
                      ? j["rationale"].get<std::string>()
                      : std::string();
    const auto& groups = routing_groups();
    for (const auto& s : j["steps"]) {
      RoutingStep step;
      step.group = require_string(s, "group");
      if (std::find(groups.begin(), groups.end(), step.group) == groups.end()) {
        throw InvariantError("unknown group '" + step.group + "'");
      }
      step.problem = problem;
      const std::string task = s.contains("task") && s["task"].is_string()
                                   ? s["task"].get<std::string>()
                                   : std::string();
      if (!task.empty()) step.problem.title = problem.title + ": " + task;
      if (s.contains("problem_class") && s["problem_class"].is_string()) {
        const std::string cls = s["problem_class"].get<std::string>();
        if (cls == "inverse") step.problem.problem_class = ProblemClass::inverse;
        else if (cls == "forward") step.problem.problem_class = ProblemClass::forward;
        else throw InvariantError("problem_class must be forward or inverse");
      }
      if (s.contains("outputs_required")) step.problem.outputs_required = string_list(s, "outputs_required");
      step.consumes = string_list(s, "consumes");
      step.produces = string_list(s, "produces");
      d.steps.push_back(std::move(step));
    }
    return d;
  };
  RoutingDecision d;
  try {
    d = llm::ask_structured<RoutingDecision>(backend, req, parse);
  } catch (const llm::MissingFixtureError&) {
    throw;
  } catch (const llm::SchemaError& e) {
    throw EscalationError("gatekeeper reply could not be interpreted", e.raw_text());
  } catch (const llm::BackendError&) {
    return heuristic_route(problem);
  }
  if (d.steps.empty()) {
    throw EscalationError(d.rationale.empty() ? "gatekeeper returned no steps" : d.rationale, {});
  }
  d.steps = order_steps(std::move(d.steps), d.repairs);
  return d;
}

}  // namespace sciloop::concept_team
