#pragma once

// Seeded synthetic multi-armed environment for exercising the regret
// accounting. Not a production policy: the agent teams are the policy.

#include <cstdint>
#include <vector>

namespace sciloop::bandit {

struct SyntheticEnvironment {
  std::vector<double> arm_means;  // expected reward of each arm, in [0,100]
  double noise_sigma = 5.0;

  /// Arm means drawn uniformly from [low, high] with the given seed.
  static SyntheticEnvironment random(std::size_t arms, std::uint64_t seed, double low = 10.0,
                                     double high = 90.0, double noise_sigma = 5.0);
  double best_mean() const;
};

enum class PolicyKind { uniform_random, greedy_with_exploration };

struct EpisodeTrace {
  std::vector<int> arms;
  std::vector<double> rewards;  // realised, clipped to [0,100]
};

/// Plays `steps` rounds. The greedy policy tries every arm once, then picks
/// the best empirical mean with probability 1 − explore_rate.
EpisodeTrace run_episode(const SyntheticEnvironment& env, PolicyKind policy, int steps,
                         std::uint64_t seed, double explore_rate = 0.1);

struct HarnessSummary {
  double mean_cumulative_regret = 0.0;
  /// Per-step seed-averaged running-mean reward.
  std::vector<double> mean_running_reward;
  /// Fraction of steps whose seed-averaged running-mean reward did not decrease.
  double nonnegative_delta_fraction = 0.0;
};

HarnessSummary run_harness(PolicyKind policy, std::size_t arms, int steps, int seeds,
                           std::uint64_t base_seed = 2024);

}  // namespace sciloop::bandit
