#include <doctest.h>

#include <random>

#include "sciloop/bandit.hpp"
#include "sciloop/bandit_harness.hpp"
#include "support/oracles.hpp"

using namespace sciloop;
using namespace sciloop::bandit;

namespace {

ActionSpace small_space() {
  return ActionSpace({"MLP", "KAN", "Polynomials"}, {"strong_form", "weak_form"},
                     {"adam", "ssbroyden"});
}

TrialRecord record_with_total(int iteration, double integrity, double precision, double consistency,
                              double details, double optimality) {
  TrialRecord r;
  r.iteration = iteration;
  r.step = 1;
  r.action = {"MLP", "strong_form", "adam", "", iteration};
  r.reward = RewardBreakdown::make(integrity, precision + consistency, details, optimality, precision,
                                   consistency);
  return r;
}

}  // namespace

TEST_CASE("every combination of the three axes validates") {
  const auto space = small_space();
  CHECK(space.size() == 12);
  int valid = 0;
  for (const auto& r : space.rep_options()) {
    for (const auto& c : space.constraint_options()) {
      for (const auto& o : space.opt_options()) {
        CHECK_NOTHROW(validate_action({r, c, o, "", 1}, space));
        ++valid;
      }
    }
  }
  CHECK(valid == 12);
}

TEST_CASE("unknown identifiers name their axis") {
  const auto space = small_space();
  try {
    validate_action({"FNO", "strong_form", "adam", "", 1}, space);
    FAIL("expected UnknownIdentifierError");
  } catch (const UnknownIdentifierError& e) {
    CHECK(e.axis() == Axis::rep);
    CHECK(e.identifier() == "FNO");
  }
  try {
    validate_action({"KAN", "strong_form", "sgd", "", 1}, space);
    FAIL("expected UnknownIdentifierError");
  } catch (const UnknownIdentifierError& e) {
    CHECK(e.axis() == Axis::opt);
  }
}

TEST_CASE("action space construction rejects empty or duplicated lists") {
  CHECK_THROWS_AS(ActionSpace({"MLP"}, {"strong_form"}, {}), InvariantError);
  CHECK_THROWS_AS(ActionSpace({"MLP", "MLP"}, {"strong_form"}, {"adam"}), InvariantError);
  const auto d = small_space().describe();
  CHECK(d.find("Polynomials") != std::string::npos);
  CHECK(d.find("ssbroyden") != std::string::npos);
}

TEST_CASE("structural change means rep or constraint differs") {
  const Action a{"MLP", "strong_form", "adam", "", 1};
  CHECK_FALSE(a.structurally_differs({"MLP", "strong_form", "ssbroyden", "", 2}));
  CHECK(a.structurally_differs({"KAN", "strong_form", "adam", "", 2}));
  CHECK(a.structurally_differs({"MLP", "weak_form", "adam", "", 2}));
}

TEST_CASE("reward_total is the exact sum of the four axes") {
  CHECK(reward_total(RewardBreakdown::make(35, 35, 15, 15, 20, 15)) == 100.0);
  CHECK(reward_total(RewardBreakdown::make(0, 0, 0, 0, 0, 0)) == 0.0);
  CHECK(reward_total(RewardBreakdown::make(30, 20, 10, 15, 10, 10)) == 75.0);
}

TEST_CASE("reward breakdown enforces caps and the accuracy split") {
  CHECK_THROWS_AS(RewardBreakdown::make(36, 0, 0, 0, 0, 0), InvariantError);
  CHECK_THROWS_AS(RewardBreakdown::make(0, 36, 0, 0, 20, 16), InvariantError);
  CHECK_THROWS_AS(RewardBreakdown::make(0, 0, 16, 0, 0, 0), InvariantError);
  CHECK_THROWS_AS(RewardBreakdown::make(0, 0, 0, -1, 0, 0), InvariantError);
  CHECK_THROWS_AS(RewardBreakdown::make(0, 10, 0, 0, 5, 4), InvariantError);
}

TEST_CASE("empirical regret") {
  const std::vector<double> flat{100, 100, 100};
  CHECK(empirical_regret(flat, 100) == 0.0);
  const std::vector<double> climbing{60, 80, 90};
  CHECK(empirical_regret(climbing, 100) == 70.0);
  CHECK_THROWS_AS(empirical_regret(std::vector<double>{}, 100), Error);
  CHECK_THROWS_AS(empirical_regret(climbing, 85), Error);

  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<double> rewards(50);
  for (auto& r : rewards) r = u(rng);
  CHECK(empirical_regret(rewards, 100) == doctest::Approx(oracle::regret(rewards, 100)).epsilon(1e-12));
}

TEST_CASE("submartingale deltas") {
  CHECK(submartingale_deltas(std::vector<double>{50, 70, 90}) == std::vector<double>{20, 20});
  CHECK(submartingale_deltas(std::vector<double>{80, 80}) == std::vector<double>{0});
  CHECK_THROWS_AS(submartingale_deltas(std::vector<double>{80}), Error);

  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<double> rewards(20);
  for (auto& r : rewards) r = u(rng);
  const auto got = submartingale_deltas(rewards);
  const auto want = oracle::deltas(rewards);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
}

TEST_CASE("trial history is contiguous and append-only") {
  TrialHistory h("s-test");
  h.append(record_with_total(1, 35, 0, 12, 8, 7));
  h.append(record_with_total(2, 35, 10, 12, 7, 7));
  CHECK(h.size() == 2);
  CHECK(h.next_iteration() == 3);
  CHECK_THROWS_AS(h.append(record_with_total(4, 35, 0, 0, 0, 0)), InvariantError);
  CHECK_THROWS_AS(h.append(record_with_total(2, 35, 0, 0, 0, 0)), InvariantError);
  CHECK(h.totals() == std::vector<double>{62, 71});
  CHECK(h.at_iteration(2).reward.precision_sub() == 10.0);
  CHECK(empirical_regret(h) == 67.0);
  CHECK(best_observed_regret(h) == 9.0);
  CHECK(submartingale_deltas(h) == std::vector<double>{9});
}

TEST_CASE("harness: episodes are reproducible and rewards stay in range") {
  const auto env = SyntheticEnvironment::random(12, 7);
  REQUIRE(env.arm_means.size() == 12);
  for (double m : env.arm_means) {
    CHECK(m >= 10.0);
    CHECK(m <= 90.0);
  }
  const auto a = run_episode(env, PolicyKind::greedy_with_exploration, 50, 3);
  const auto b = run_episode(env, PolicyKind::greedy_with_exploration, 50, 3);
  CHECK(a.arms == b.arms);
  CHECK(a.rewards == b.rewards);
  for (double r : a.rewards) {
    CHECK(r >= 0.0);
    CHECK(r <= 100.0);
  }
  // The greedy policy tries every arm once before exploiting.
  std::vector<int> first(a.arms.begin(), a.arms.begin() + 12);
  std::sort(first.begin(), first.end());
  for (int i = 0; i < 12; ++i) CHECK(first[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("harness: exploiting history beats uniform play on a small run") {
  const auto greedy = run_harness(PolicyKind::greedy_with_exploration, 12, 100, 20);
  const auto uniform = run_harness(PolicyKind::uniform_random, 12, 100, 20);
  CHECK(greedy.mean_cumulative_regret < uniform.mean_cumulative_regret);
  CHECK(greedy.mean_running_reward.size() == 100);
}
