#include "sciloop/bandit_harness.hpp"

#include <algorithm>
#include <random>
#include <span>

#include "sciloop/bandit.hpp"

namespace sciloop::bandit {

SyntheticEnvironment SyntheticEnvironment::random(std::size_t arms, std::uint64_t seed, double low,
                                                  double high, double noise_sigma) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(low, high);
  SyntheticEnvironment env;
  env.noise_sigma = noise_sigma;
  env.arm_means.reserve(arms);
  for (std::size_t i = 0; i < arms; ++i) env.arm_means.push_back(dist(rng));
  return env;
}

double SyntheticEnvironment::best_mean() const {
  return *std::max_element(arm_means.begin(), arm_means.end());
}

EpisodeTrace run_episode(const SyntheticEnvironment& env, PolicyKind policy, int steps,
                         std::uint64_t seed, double explore_rate) {
  std::mt19937_64 rng(seed);
  const int arms = static_cast<int>(env.arm_means.size());
  std::uniform_int_distribution<int> pick(0, arms - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, env.noise_sigma);

  std::vector<double> sums(static_cast<std::size_t>(arms), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(arms), 0);
  EpisodeTrace trace;
  trace.arms.reserve(static_cast<std::size_t>(steps));
  trace.rewards.reserve(static_cast<std::size_t>(steps));

  for (int t = 0; t < steps; ++t) {
    int arm = 0;
    if (policy == PolicyKind::uniform_random) {
      arm = pick(rng);
    } else if (t < arms) {
      arm = t;
    } else if (coin(rng) < explore_rate) {
      arm = pick(rng);
    } else {
      double best = -1.0;
      for (int a = 0; a < arms; ++a) {
        const double mean = sums[a] / counts[a];
        if (mean > best) {
          best = mean;
          arm = a;
        }
      }
    }
    const double r = std::clamp(env.arm_means[arm] + noise(rng), 0.0, kMaxReward);
    sums[arm] += r;
    counts[arm] += 1;
    trace.arms.push_back(arm);
    trace.rewards.push_back(r);
  }
  return trace;
}

HarnessSummary run_harness(PolicyKind policy, std::size_t arms, int steps, int seeds,
                           std::uint64_t base_seed) {
  HarnessSummary out;
  out.mean_running_reward.assign(static_cast<std::size_t>(steps), 0.0);
  double regret_sum = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s) * 7919u;
    const auto env = SyntheticEnvironment::random(arms, seed);
    const auto trace = run_episode(env, policy, steps, seed ^ 0x9e3779b97f4a7c15ull);
    // Regret is taken over expected rewards of the played arms, so R* is the
    // best arm mean rather than a noisy sample.
    std::vector<double> expected;
    expected.reserve(trace.arms.size());
    for (int arm : trace.arms) expected.push_back(env.arm_means[static_cast<std::size_t>(arm)]);
    regret_sum += empirical_regret(std::span<const double>(expected), env.best_mean());
    double running = 0.0;
    for (int t = 0; t < steps; ++t) {
      running += trace.rewards[static_cast<std::size_t>(t)];
      out.mean_running_reward[static_cast<std::size_t>(t)] += running / (t + 1) / seeds;
    }
  }
  out.mean_cumulative_regret = regret_sum / seeds;
  const auto deltas = submartingale_deltas(std::span<const double>(out.mean_running_reward));
  const auto nonneg = std::count_if(deltas.begin(), deltas.end(), [](double d) { return d >= 0.0; });
  out.nonnegative_delta_fraction = static_cast<double>(nonneg) / static_cast<double>(deltas.size());
  return out;
}

}  // namespace sciloop::bandit
