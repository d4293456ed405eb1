#include <doctest.h>

#include "sciloop/implementation.hpp"
#include "support/test_support.hpp"

using namespace sciloop;
using namespace sciloop::impl;

namespace {

const char* kTemplate =
    "import torch\n"
    "# %% config\n"
    "EPOCHS = 1000\n"
    "LR = 1e-3\n"
    "# %% model\n"
    "net = mlp(width=64)\n"
    "# %% train\n"
    "train(net, EPOCHS, LR)\n";

Prompts prompts() { return {"plan", "parse plan", "patch", "inspect"}; }

std::string targets(std::initializer_list<std::pair<int, const char*>> ts) {
  Json arr = Json::array();
  for (const auto& [i, intent] : ts) arr.push_back({{"cell_index", i}, {"intent", intent}});
  return Json{{"targets", arr}}.dump();
}

std::string replace_line(int cell, int line, const std::string& text) {
  return Json{{"cell_index", cell},
              {"ops", {{{"op", "replace"}, {"start_line", line}, {"end_line", line}, {"lines", {text}}}}}}
      .dump();
}

const char* kFaithful = R"({"faithful": true, "violations": []})";

std::string unfaithful(const std::string& req) {
  return Json{{"faithful", false}, {"violations", {{{"requirement", req}, {"evidence", "cell 0"}}}}}.dump();
}

policy::StrategyReport strategy(const std::string& rep, const std::string& opt) {
  policy::StrategyReport s;
  s.action = {rep, "strong_form", opt, "", 2};
  s.narrative = "Use " + rep + " with " + opt + ".";
  s.training_plan = "EPOCHS = 5000";
  return s;
}

}  // namespace

TEST_CASE("plan repairs: out-of-range dropped, duplicates merged, suspects added") {
  const auto script = cells::parse_cells(kTemplate);
  llm::MockBackend m;
  m.add("planner", "Touch config and the nonexistent cell 99.");
  m.add("planner_parser", targets({{99, "nothing"}, {0, "raise epochs"}, {0, "lower lr"}}));
  Directive d{"fix it", {2}};
  const auto plan = plan_targets(d, script, m, prompts());
  REQUIRE(plan.targets.size() == 2);
  CHECK(plan.targets[0] == CellTarget{0, "raise epochs; lower lr"});
  CHECK(plan.targets[1] == CellTarget{2, "fix it"});
  CHECK(plan.repairs.size() == 3);
  CHECK(plan.study == "Touch config and the nonexistent cell 99.");
  CHECK(m.calls()[1].request.messages[0].text.find("3 cells (0..2)") != std::string::npos);
}

TEST_CASE("plan is capped at max_targets") {
  const auto script = cells::parse_cells(kTemplate);
  llm::MockBackend m;
  m.add("planner", "all");
  m.add("planner_parser", targets({{0, "a"}, {1, "b"}, {2, "c"}}));
  const auto plan = plan_targets(Directive{"x", {}}, script, m, prompts(), 2);
  CHECK(plan.targets.size() == 2);
  CHECK(plan.targets.back().cell_index == 1);
}

TEST_CASE("emit_patch") {
  const auto script = cells::parse_cells(kTemplate);
  llm::MockBackend none;
  CHECK(emit_patch(script, 1, "   ", none, "patch").ops.empty());
  CHECK(none.calls().empty());
  CHECK_THROWS_AS(emit_patch(script, 7, "x", none, "patch"), cells::PatchError);

  llm::MockBackend retry;
  retry.add("patcher", replace_line(1, 5, "net = kan()"));
  retry.add("patcher", replace_line(1, 0, "net = kan()"));
  const auto p = emit_patch(script, 1, "switch to KAN", retry, "patch");
  CHECK(p.ops.size() == 1);
  CHECK(retry.calls().size() == 2);

  llm::MockBackend wrong_cell;
  wrong_cell.add("patcher", replace_line(0, 0, "x"));
  wrong_cell.add("patcher", replace_line(0, 0, "x"));
  CHECK_THROWS_AS(emit_patch(script, 1, "switch", wrong_cell, "patch"), cells::PatchError);
}

TEST_CASE("inspection verdicts") {
  const auto script = cells::parse_cells(kTemplate);
  auto s = strategy("mlp", "adam");
  llm::MockBackend ok;
  ok.add("inspector", kFaithful);
  CHECK(inspect(script, s, ok, "inspect").faithful);

  s.required_modules = {"vRBA"};
  llm::MockBackend missing_module;
  missing_module.add("inspector", kFaithful);
  const auto v = inspect(script, s, missing_module, "inspect");
  CHECK_FALSE(v.faithful);
  CHECK(v.violations.front().requirement == "required module vRBA");

  llm::MockBackend contradictory;
  contradictory.add("inspector", R"({"faithful": true, "violations": [{"requirement": "x"}]})");
  contradictory.add("inspector", R"({"faithful": false, "violations": []})");
  const auto bad = inspect(script, strategy("mlp", "adam"), contradictory, "inspect");
  CHECK_FALSE(bad.faithful);
  CHECK(bad.backend_failure);
}

TEST_CASE("module cells are inserted once, before the first cell") {
  const auto script = cells::parse_cells(kTemplate);
  const std::vector<store::ModuleRecord> mods = {
      {"weights_util", "", "def w():\n    return 1\n", {}, store::Provenance::library},
      {"vRBA", "", "def r():\n    return w()\n", {"weights_util"}, store::Provenance::library}};
  const auto out = insert_module_cells(script, mods);
  REQUIRE(out.cells.size() == 5);
  CHECK(out.cells[0].name == "module:weights_util");
  CHECK(out.cells[1].name == "module:vRBA");
  CHECK(out.cells[2] == script.cells[0]);
  CHECK(insert_module_cells(out, mods).cells.size() == 5);
}

TEST_CASE("implement from the template and the prior script") {
  auto s = strategy("mlp", "adam_then_lbfgs");
  ImplementInput in;
  in.strategy = &s;
  in.template_source = kTemplate;
  in.prior_source = std::string(kTemplate) + "# %% extra\nlog()\n";
  in.prior_action = bandit::Action{"mlp", "strong_form", "adam", "", 1};

  llm::MockBackend tuning;
  tuning.add("planner", "Raise epochs.");
  tuning.add("planner_parser", targets({{0, "EPOCHS = 5000"}}));
  tuning.add("patcher", replace_line(0, 0, "EPOCHS = 5000"));
  tuning.add("inspector", kFaithful);
  const auto t = implement(in, tuning, prompts());
  CHECK_FALSE(t.fresh);
  CHECK(t.script.cells.size() == 4);
  CHECK(t.script.cells[0].lines[0] == "EPOCHS = 5000");
  const auto prior = cells::parse_cells(*in.prior_source);
  for (std::size_t c = 1; c < prior.cells.size(); ++c) CHECK(t.script.cells[c] == prior.cells[c]);
  CHECK(t.sha256 == sha256_hex(t.source));
  CHECK(t.inspections == 1);

  auto structural = strategy("kan", "adam");
  in.strategy = &structural;
  llm::MockBackend fresh;
  fresh.add("planner", "Swap the model.");
  fresh.add("planner_parser", targets({{1, "use KAN"}}));
  fresh.add("patcher", replace_line(1, 0, "net = kan()"));
  fresh.add("inspector", kFaithful);
  const auto f = implement(in, fresh, prompts());
  CHECK(f.fresh);
  CHECK(f.script.cells.size() == 3);
  CHECK(f.source == std::string(kTemplate).replace(std::string(kTemplate).find("net = mlp(width=64)"), 19, "net = kan()"));
}

TEST_CASE("an unfaithful verdict triggers one repair round and then flags the code") {
  auto s = strategy("mlp", "adam");
  ImplementInput in;
  in.strategy = &s;
  in.template_source = kTemplate;

  llm::MockBackend m;
  m.add("planner", "p1");
  m.add("planner_parser", targets({{0, "a"}}));
  m.add("patcher", replace_line(0, 0, "EPOCHS = 2"));
  m.add("inspector", unfaithful("EPOCHS = 5000"));
  m.add("planner", "p2");
  m.add("planner_parser", targets({{0, "b"}}));
  m.add("patcher", replace_line(0, 0, "EPOCHS = 3"));
  m.add("inspector", unfaithful("EPOCHS = 5000"));
  const auto st = implement(in, m, prompts());
  CHECK(st.unfaithful);
  CHECK(st.inspections == 2);
  CHECK(st.patches.size() == 2);
  CHECK(m.unconsumed().empty());
  const auto calls = m.calls();
  CHECK(calls[4].request.messages[0].text.find("- EPOCHS = 5000: cell 0") != std::string::npos);
}

TEST_CASE("identical inputs give an identical code hash") {
  auto s = strategy("mlp", "adam");
  auto run = [&] {
    ImplementInput in;
    in.strategy = &s;
    in.template_source = kTemplate;
    llm::MockBackend m;
    m.add("planner", "p");
    m.add("planner_parser", targets({{2, "log"}}));
    m.add("patcher", replace_line(2, 0, "train(net, EPOCHS, LR, log=True)"));
    m.add("inspector", kFaithful);
    return implement(in, m, prompts()).sha256;
  };
  CHECK(run() == run());
}

TEST_CASE("stage errors name their stage") {
  auto s = strategy("mlp", "adam");
  ImplementInput in;
  in.strategy = &s;
  in.template_source = kTemplate;
  llm::MockBackend bad_plan;
  bad_plan.add("planner", "p");
  bad_plan.add("planner_parser", "not json");
  bad_plan.add("planner_parser", "still not json");
  try {
    implement(in, bad_plan, prompts());
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "plan");
  }
  in.delimiter_pattern = "(";
  llm::MockBackend unused;
  try {
    implement(in, unused, prompts());
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "parse");
  }
}

TEST_CASE("repair patches the suspect cell without inspection") {
  CodeState st;
  st.script = cells::parse_cells(kTemplate);
  llm::MockBackend m;
  m.add("planner", "NameError in train");
  m.add("planner_parser", R"({"targets": []})");
  m.add("patcher", replace_line(2, 0, "train(net, EPOCHS, LR)  # fixed"));
  const auto next = repair(st, Directive{"define net before training", {2}}, m, prompts());
  CHECK(next.script.cells[2].lines[0] == "train(net, EPOCHS, LR)  # fixed");
  CHECK(next.patches.size() == 1);
  CHECK(m.call_count("inspector") == 0);
}
