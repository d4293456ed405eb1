#include <doctest.h>

#include "sciloop/conceptualization.hpp"
#include "sciloop/scaffolding.hpp"
#include "support/test_support.hpp"

using namespace sciloop;
using namespace sciloop::concept_team;

namespace {

const scaffolding::BlueprintRegistry& registry() {
  static const auto reg = scaffolding::load_blueprints(testsupport::asset_dir() + "/blueprints");
  return reg;
}

std::string prompt(const char* role) {
  return scaffolding::compose_system_prompt(role, "general", registry()).system_prompt;
}

FormalProblem wave_without_bcs() {
  FormalProblem p;
  p.title = "Wave equation";
  p.pde_or_task = "u_tt = c^2 u_xx";
  p.domain_spec = "x in [0, 1], t in [0, 2]";
  p.initial_conditions = "u(x,0) = sin(pi x), u_t(x,0) = 0";
  p.time_dependent = true;
  return p;
}

RoutingDecision route_fixture(const std::string& name) {
  const std::string dir = testsupport::fixture_path("routing/" + name);
  auto backend = llm::load_fixture(dir + "/transcript.jsonl");
  const auto problem = formalize_request(read_file(dir + "/request.txt"), *backend, prompt("coordinator"));
  auto d = route(problem, *backend, prompt("gatekeeper"));
  CHECK(backend->unconsumed().empty());
  return d;
}

RoutingStep step(const std::string& group, std::vector<std::string> consumes,
                 std::vector<std::string> produces) {
  RoutingStep s;
  s.group = group;
  s.consumes = std::move(consumes);
  s.produces = std::move(produces);
  return s;
}

}  // namespace

TEST_CASE("formal problem JSON round trip and strict types") {
  auto p = wave_without_bcs();
  p.reference_data = ReferenceData{"data/ldc.npz", "u, v on a 64x64 grid"};
  p.problem_class = ProblemClass::inverse;
  p.outputs_required = {"results.npz"};
  CHECK(FormalProblem::from_json(p.to_json()) == p);
  Json bad = p.to_json();
  bad["time_dependent"] = "yes";
  CHECK_THROWS_AS(FormalProblem::from_json(bad), InvariantError);
  Json traversal = p.to_json();
  traversal["reference_data"]["path"] = "../../etc/passwd";
  CHECK_THROWS_AS(FormalProblem::from_json(traversal), InvariantError);
}

TEST_CASE("reference paths") {
  CHECK(valid_reference_path("runs/ldc/v001/ldc.npz"));
  CHECK(valid_reference_path("/data/ldc.npz"));
  CHECK_FALSE(valid_reference_path("../ldc.npz"));
  CHECK_FALSE(valid_reference_path(""));
  CHECK_FALSE(valid_reference_path(std::string("a\x01") + "b"));
}

TEST_CASE("a wave equation without boundary conditions is ill-posed") {
  const auto w = assess_well_posedness(wave_without_bcs());
  CHECK(w.ill_posed);
  REQUIRE_FALSE(w.questions.empty());
  CHECK(w.questions[0].find("boundary") != std::string::npos);

  auto fixed = wave_without_bcs();
  fixed.boundary_conditions = "u(0,t) = 0 and u(1,t) = 0";
  CHECK_FALSE(assess_well_posedness(fixed).ill_posed);

  auto one_sided = wave_without_bcs();
  one_sided.boundary_conditions = "u(0,t) = 0";
  CHECK(assess_well_posedness(one_sided).ill_posed);

  auto no_ic = fixed;
  no_ic.initial_conditions.clear();
  CHECK(assess_well_posedness(no_ic).ill_posed);
}

TEST_CASE("character classification") {
  FormalProblem p;
  p.pde_or_task = "inviscid Burgers u_t + u u_x = 0";
  CHECK(classify_character(p) == "hyperbolic");
  p.pde_or_task = "Poisson equation -laplacian u = f";
  CHECK(classify_character(p) == "elliptic");
  p.pde_or_task = "heat equation u_t = k u_xx";
  CHECK(classify_character(p) == "parabolic");
  p.pde_or_task = "classify images";
  CHECK(classify_character(p).empty());
  p.character = "elliptic";
  CHECK(classify_character(p) == "elliptic");
}

TEST_CASE("formalize_request records the checklist questions") {
  llm::MockBackend m;
  Json reply = wave_without_bcs().to_json();
  m.add("coordinator", "Here is the problem:\n" + reply.dump());
  const auto p = formalize_request("Solve the wave equation.", m, prompt("coordinator"));
  CHECK(p.ill_posed);
  CHECK(p.character == "hyperbolic");
  CHECK_FALSE(p.clarifications.empty());
  CHECK_THROWS_AS(formalize_request("  ", m, prompt("coordinator")), InvariantError);
}

TEST_CASE("routing fixtures") {
  const Json expected = Json::parse(read_file(testsupport::fixture_path("routing/expected.json")));
  for (const auto& [name, groups] : expected.items()) {
    CAPTURE(name);
    const auto d = route_fixture(name);
    CHECK(d.groups() == groups.get<std::vector<std::string>>());
    CHECK_FALSE(d.from_fallback);
  }
}

TEST_CASE("hybrid routing threads data between steps") {
  const auto d = route_fixture("aiv");
  REQUIRE(d.steps.size() == 3);
  CHECK(d.steps[0].produces == std::vector<std::string>{"ldc.npz"});
  CHECK(d.steps[1].consumes == std::vector<std::string>{"ldc.npz"});
  CHECK(d.steps[1].problem.problem_class == ProblemClass::inverse);
  CHECK(d.steps[2].consumes.front() == "results.npz");
  CHECK(d.steps[2].problem.problem_class == ProblemClass::forward);
  CHECK(RoutingDecision::from_json(d.to_json()) == d);
}

TEST_CASE("step ordering repairs dependency order and rejects cycles") {
  std::vector<std::string> repairs;
  auto ordered = order_steps({step("scic", {"results.npz"}, {"plot.png"}), step("scic", {}, {"ldc.npz"}),
                              step("sciml_piml", {"ldc.npz"}, {"results.npz"})},
                             repairs);
  CHECK(ordered[0].produces == std::vector<std::string>{"ldc.npz"});
  CHECK(ordered[1].group == "sciml_piml");
  CHECK(ordered[2].produces == std::vector<std::string>{"plot.png"});
  CHECK_FALSE(repairs.empty());

  repairs.clear();
  auto same = order_steps({step("scic", {}, {"a"}), step("scic", {"a"}, {"b"})}, repairs);
  CHECK(repairs.empty());
  CHECK_THROWS_AS(order_steps({step("scic", {"b"}, {"a"}), step("scic", {"a"}, {"b"})}, repairs),
                  EscalationError);
}

TEST_CASE("gatekeeper failures") {
  const auto problem = wave_without_bcs();
  llm::MockBackend unknown;
  unknown.add("gatekeeper", R"({"steps": [{"group": "quantum"}]})");
  unknown.add("gatekeeper", R"({"steps": [{"group": "quantum"}]})");
  CHECK_THROWS_AS(route(problem, unknown, prompt("gatekeeper")), EscalationError);

  llm::MockBackend empty;
  empty.add("gatekeeper", R"({"steps": [], "rationale": "not a scientific computing task"})");
  try {
    route(problem, empty, prompt("gatekeeper"));
    FAIL("expected EscalationError");
  } catch (const EscalationError& e) {
    CHECK(e.reason() == "not a scientific computing task");
  }

  llm::MockBackend down;
  down.fail_role("gatekeeper");
  const auto d = route(problem, down, prompt("gatekeeper"));
  CHECK(d.from_fallback);
  CHECK(d.groups() == std::vector<std::string>{"scic"});
}

TEST_CASE("heuristic route prefers the classical group unless asked") {
  FormalProblem p;
  p.title = "Heat conduction";
  p.pde_or_task = "u_t = u_xx";
  CHECK(heuristic_route(p).groups() == std::vector<std::string>{"scic"});
  p.pde_or_task = "train a physics-informed network for u_t = u_xx";
  CHECK(heuristic_route(p).groups() == std::vector<std::string>{"sciml_piml"});
  p.method_hint = "operator";
  CHECK(heuristic_route(p).groups() == std::vector<std::string>{"sciml_operator"});
}
