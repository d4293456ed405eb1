#include <doctest.h>

#include "sciloop/hena.hpp"
#include "sciloop/policy.hpp"
#include "support/test_support.hpp"

using namespace sciloop;
using namespace sciloop::policy;

namespace {

PolicyContext context() {
  PolicyContext ctx;
  ctx.strategist_prompt = "You are the strategist.";
  ctx.critic_prompt = "You are the critic.";
  ctx.problem_text = "Viscous Burgers, periodic in x.";
  ctx.space = hena::default_action_space();
  ctx.iteration = 2;
  return ctx;
}

std::string strategy_json(const std::string& rep, const std::string& narrative,
                          const std::string& opt = "adam") {
  return Json{{"rep", rep},
              {"constraint", "strong_form"},
              {"opt", opt},
              {"narrative", narrative},
              {"required_modules", Json::array()},
              {"training_plan", "20000 epochs"},
              {"acceptance_targets", {{"rel_l2", 1e-3}}}}
      .dump();
}

std::string accept() { return R"({"verdict": "accepted", "requirements": [], "cited_principle": "piml"})"; }

std::string reject(const std::string& requirement) {
  return Json{{"verdict", "rejected"}, {"requirements", {requirement}}, {"cited_principle", "optimization"}}
      .dump();
}

std::string diagnosis_json(double details, const std::string& verdict, Json revert = nullptr) {
  return Json{{"failure_modes", {"spectral bias"}},
              {"prescribed_cure", "add periodic features"},
              {"grades", {{"details", details}, {"optimality", 10}, {"consistency", 0.5}}},
              {"verdict", verdict},
              {"revert_iteration", revert}}
      .dump();
}

}  // namespace

TEST_CASE("the strategist answers the prior cure") {
  auto ctx = context();
  StructuredDiagnosis prior;
  prior.prescribed_cure = "Periodic Fourier Features";
  ctx.prior_diagnosis = prior;
  llm::MockBackend m;
  m.add("strategist", strategy_json("mlp_fourier", "Switch to Fourier features to fight spectral bias."));
  const auto r = propose_strategy(ctx, m);
  CHECK(contains_icase(r.narrative, "Periodic Fourier Features"));
  CHECK(r.action.iteration == 2);
  CHECK(r.action.rep == "mlp_fourier");
  const auto& msg = m.calls()[0].request.messages[0].text;
  CHECK(msg.find("Prescribed cure: Periodic Fourier Features") != std::string::npos);

  llm::MockBackend cites;
  cites.add("strategist", strategy_json("mlp_fourier", "Adopt periodic fourier features now."));
  const auto kept = propose_strategy(ctx, cites);
  CHECK(kept.narrative == "Adopt periodic fourier features now.");
}

TEST_CASE("an unknown identifier is a schema failure after the re-ask") {
  llm::MockBackend m;
  m.add("strategist", strategy_json("FNO", "operator"));
  m.add("strategist", strategy_json("FNO", "operator again"));
  try {
    propose_strategy(context(), m);
    FAIL("expected SchemaError");
  } catch (const llm::SchemaError& e) {
    CHECK(e.attempts() == 2);
    CHECK(std::string(e.what()).find("FNO") != std::string::npos);
  }
}

TEST_CASE("critique parsing") {
  const auto c = Critique::from_json(Json::parse(reject("continue from the viscous solution")));
  CHECK_FALSE(c.accepted);
  CHECK(c.requirements == std::vector<std::string>{"continue from the viscous solution"});
  CHECK_THROWS_AS(Critique::from_json(Json{{"verdict", "rejected"}, {"requirements", Json::array()}}),
                  InvariantError);
  CHECK(Critique::from_json(c.to_json()) == c);
}

TEST_CASE("strategy loop accepts in one round") {
  llm::MockBackend m;
  m.add("strategist", strategy_json("kan", "KAN basis"));
  m.add("critic", accept());
  int observed = 0;
  const auto out = strategy_loop(context(), m, 3, [&](const StrategyRound&) { ++observed; });
  CHECK(out.rounds.size() == 1);
  CHECK(observed == 1);
  CHECK_FALSE(out.report.force_accepted);
  CHECK(out.report.action.rep == "kan");
}

TEST_CASE("critic requirements thread into the next proposal") {
  llm::MockBackend m;
  m.add("strategist", strategy_json("mlp", "plain MLP on the inviscid limit"));
  m.add("critic", reject("use viscous continuation: start from a larger viscosity and anneal it"));
  m.add("strategist", strategy_json("mlp", "viscous continuation schedule", "adam_then_lbfgs"));
  m.add("critic", accept());
  const auto out = strategy_loop(context(), m);
  REQUIRE(out.rounds.size() == 2);
  CHECK(out.report.action.opt == "adam_then_lbfgs");
  const auto calls = m.calls();
  CHECK(calls[2].role == "strategist");
  CHECK(calls[2].request.messages[0].text.find("viscous continuation") != std::string::npos);
}

TEST_CASE("three rejections force-accept the last proposal with its critique") {
  llm::MockBackend m;
  for (int i = 1; i <= 3; ++i) {
    m.add("strategist", strategy_json("mlp", "attempt " + std::to_string(i)));
    m.add("critic", reject("requirement " + std::to_string(i)));
  }
  const auto out = strategy_loop(context(), m, 3);
  CHECK(out.rounds.size() == 3);
  CHECK(out.report.force_accepted);
  REQUIRE(out.report.attached_critique);
  CHECK(out.report.attached_critique->requirements == std::vector<std::string>{"requirement 3"});
  CHECK(out.report.narrative == "attempt 3");
  CHECK_THROWS_AS(strategy_loop(context(), m, 0), InvariantError);
}

TEST_CASE("strategy report JSON round trip") {
  const auto space = hena::default_action_space();
  auto r = StrategyReport::from_json(Json::parse(strategy_json("kan", "n")), space);
  r.force_accepted = true;
  r.attached_critique = Critique{false, {"x"}, "y"};
  const auto back = StrategyReport::from_json(r.to_json(), space);
  CHECK(back.action.rep == "kan");
  CHECK(back.force_accepted);
  CHECK(back.acceptance_targets.at("rel_l2") == 1e-3);
}

TEST_CASE("advisor attaches plots only for image-capable roles") {
  testsupport::TempDir tmp;
  AdvisorInput in;
  in.observation.metrics = {{"rel_l2", 2e-2}};
  in.observation.artifact_paths = {"p/v001/summary_all.png"};
  in.image_paths = {tmp.sub("summary_all.png")};
  in.system_prompt = "You are the advisor.";
  write_file(in.image_paths[0], "PNG");
  StrategyReport s;
  s.action = {"mlp", "strong_form", "adam", "", 1};
  reward::ScoringConfig scoring;

  llm::MockBackend text_only;
  text_only.add("advisor", "The error is too high.");
  const auto a = advise(in, s, text_only, scoring);
  CHECK(a.attached_images.empty());
  CHECK(text_only.calls()[0].request.messages[0].text.find("p/v001/summary_all.png") != std::string::npos);

  llm::MockBackend vision;
  vision.set_image_roles({"advisor"});
  vision.add("advisor", "Looks smooth.");
  const auto b = advise(in, s, vision, scoring);
  CHECK(b.attached_images == in.image_paths);
  CHECK_FALSE(b.degraded);
}

TEST_CASE("advisor degrades to rule-based text when the backend fails") {
  AdvisorInput in;
  in.observation.exit_code = 1;
  in.system_prompt = "You are the advisor.";
  llm::MockBackend down;
  down.fail_role("advisor");
  const auto r = advise(in, StrategyReport{}, down, reward::ScoringConfig{});
  CHECK(r.degraded);
  CHECK(r.text.find("exit code 1") != std::string::npos);

  llm::MockBackend missing;
  CHECK_THROWS_AS(advise(in, StrategyReport{}, missing, reward::ScoringConfig{}), llm::MissingFixtureError);
}

TEST_CASE("rule-based diagnosis") {
  reward::ScoringConfig cfg;
  bandit::Observation crash;
  crash.exit_code = 2;
  auto d = rule_based_diagnosis(crash, cfg);
  CHECK(d.failure_modes.front() == "execution failed with exit code 2");
  CHECK(d.extras.at("degraded") == "true");
  bandit::Observation high;
  high.metrics = {{"rel_l2", 0.5}};
  CHECK(rule_based_diagnosis(high, cfg).prescribed_cure == "reduce rel_l2");
  bandit::Observation good;
  good.metrics = {{"rel_l2", 1e-6}};
  CHECK(rule_based_diagnosis(good, cfg).failure_modes.empty());
}

TEST_CASE("advisor parser: revert targets and grade bounds") {
  llm::MockBackend m;
  m.add("advisor_parser", diagnosis_json(12, "revert_to", 9));
  const auto d = parse_advisor("We must now revert to Run 9.", m, "You parse.", 12);
  CHECK(d.verdict == Verdict::revert_to);
  REQUIRE(d.revert_iteration);
  CHECK(*d.revert_iteration == 9);
  CHECK(m.calls()[0].request.messages[0].text.find("revert to Run 9") != std::string::npos);

  llm::MockBackend bad;
  bad.add("advisor_parser", diagnosis_json(20, "continue"));
  bad.add("advisor_parser", diagnosis_json(16, "continue"));
  try {
    parse_advisor("report", bad, "You parse.", 3);
    FAIL("expected SchemaError");
  } catch (const llm::SchemaError& e) {
    CHECK(e.raw_text().find("16") != std::string::npos);
  }

  CHECK_THROWS_AS(diagnosis_from_json(Json::parse(diagnosis_json(5, "revert_to", 9)), 4), InvariantError);
  CHECK_THROWS_AS(diagnosis_from_json(Json::parse(diagnosis_json(5, "revert_to")), 4), InvariantError);
  const auto ok = diagnosis_from_json(Json::parse(diagnosis_json(5, "stop_success")), 4);
  CHECK(diagnosis_from_json(diagnosis_to_json(ok), 4) == ok);
}
