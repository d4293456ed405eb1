#include "sciloop/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace sciloop {

namespace {

void check_bound(const char* name, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << name << " out of bounds [" << lo << ", " << hi << "]: " << v;
    throw InvariantError(os.str());
  }
}

double clamp_or_zero(double v, double lo, double hi) {
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, lo, hi);
}

}  // namespace

AdvisorGrades AdvisorGrades::make(double details, double optimality, double consistency,
                                  std::string rationale) {
  check_bound("details_grade", details, 0.0, 15.0);
  check_bound("optimality_grade", optimality, 0.0, 15.0);
  check_bound("consistency_grade", consistency, 0.0, 1.0);
  return AdvisorGrades{details, optimality, consistency, std::move(rationale)};
}

AdvisorGrades AdvisorGrades::clamped(double details, double optimality, double consistency,
                                     std::string rationale) {
  return AdvisorGrades{clamp_or_zero(details, 0.0, 15.0), clamp_or_zero(optimality, 0.0, 15.0),
                       clamp_or_zero(consistency, 0.0, 1.0), std::move(rationale)};
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::continue_loop: return "continue";
    case Verdict::revert_to: return "revert_to";
    case Verdict::stop_success: return "stop_success";
    case Verdict::stop_exhausted: return "stop_exhausted";
  }
  return "continue";
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "continue") return Verdict::continue_loop;
  if (s == "revert_to") return Verdict::revert_to;
  if (s == "stop_success") return Verdict::stop_success;
  if (s == "stop_exhausted") return Verdict::stop_exhausted;
  throw InvariantError("unknown verdict: " + s);
}

}  // namespace sciloop

namespace sciloop::bandit {

std::string to_string(Axis a) {
  switch (a) {
    case Axis::rep: return "rep";
    case Axis::constraint: return "constraint";
    case Axis::opt: return "opt";
  }
  return "rep";
}

namespace {

void check_option_list(Axis axis, const std::vector<std::string>& options) {
  if (options.empty()) {
    throw InvariantError("action space axis '" + to_string(axis) + "' has no options");
  }
  std::set<std::string> seen;
  for (const auto& id : options) {
    if (id.empty()) throw InvariantError("empty identifier on axis '" + to_string(axis) + "'");
    if (!seen.insert(id).second) {
      throw InvariantError("duplicate identifier '" + id + "' on axis '" + to_string(axis) + "'");
    }
  }
}

}  // namespace

ActionSpace::ActionSpace(std::vector<std::string> rep, std::vector<std::string> constraint,
                         std::vector<std::string> opt)
    : rep_(std::move(rep)), constraint_(std::move(constraint)), opt_(std::move(opt)) {
  check_option_list(Axis::rep, rep_);
  check_option_list(Axis::constraint, constraint_);
  check_option_list(Axis::opt, opt_);
}

const std::vector<std::string>& ActionSpace::options(Axis a) const {
  switch (a) {
    case Axis::rep: return rep_;
    case Axis::constraint: return constraint_;
    case Axis::opt: return opt_;
  }
  return rep_;
}

std::string ActionSpace::describe() const {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += v[i];
    }
    return s;
  };
  return "rep: [" + join(rep_) + "]\nconstraint: [" + join(constraint_) + "]\nopt: [" +
         join(opt_) + "]";
}

UnknownIdentifierError::UnknownIdentifierError(Axis axis, std::string id)
    : Error("unknown identifier '" + id + "' on axis '" + to_string(axis) + "'"),
      axis_(axis),
      id_(std::move(id)) {}

void validate_action(const Action& action, const ActionSpace& space) {
  if (space.empty()) throw InvariantError("action space is not initialised");
  auto check = [&](Axis axis, const std::string& id) {
    const auto& opts = space.options(axis);
    if (std::find(opts.begin(), opts.end(), id) == opts.end()) {
      throw UnknownIdentifierError(axis, id);
    }
  };
  check(Axis::rep, action.rep);
  check(Axis::constraint, action.constraint);
  check(Axis::opt, action.opt);
}

RewardBreakdown RewardBreakdown::make(double integrity, double accuracy, double details,
                                      double optimality, double precision_sub,
                                      double consistency_sub) {
  check_bound("integrity", integrity, 0.0, kIntegrityCap);
  check_bound("accuracy", accuracy, 0.0, kAccuracyCap);
  check_bound("details", details, 0.0, kDetailsCap);
  check_bound("optimality", optimality, 0.0, kOptimalityCap);
  check_bound("precision_sub", precision_sub, 0.0, kAccuracyCap);
  check_bound("consistency_sub", consistency_sub, 0.0, kAccuracyCap);
  if (std::fabs(accuracy - (precision_sub + consistency_sub)) > 1e-9) {
    throw InvariantError("accuracy must equal precision_sub + consistency_sub");
  }
  RewardBreakdown r;
  r.integrity_ = integrity;
  r.accuracy_ = accuracy;
  r.details_ = details;
  r.optimality_ = optimality;
  r.precision_sub_ = precision_sub;
  r.consistency_sub_ = consistency_sub;
  return r;
}

double reward_total(const RewardBreakdown& r) {
  return r.integrity() + r.accuracy() + r.details() + r.optimality();
}

const TrialRecord& TrialHistory::at_iteration(int iteration) const {
  if (iteration < 1 || iteration > static_cast<int>(records_.size())) {
    throw Error("no trial with iteration " + std::to_string(iteration));
  }
  return records_[static_cast<std::size_t>(iteration - 1)];
}

void TrialHistory::append(TrialRecord record) {
  if (record.iteration != next_iteration()) {
    throw InvariantError("trial iteration " + std::to_string(record.iteration) +
                         " does not continue history at " + std::to_string(next_iteration()));
  }
  records_.push_back(std::move(record));
}

std::vector<double> TrialHistory::totals() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(reward_total(r.reward));
  return out;
}

double empirical_regret(std::span<const double> rewards, double r_star) {
  if (rewards.empty()) throw Error("regret of an empty history is undefined");
  const double best = *std::max_element(rewards.begin(), rewards.end());
  if (r_star < best) throw Error("r_star is below the best observed reward");
  double sum = 0.0;
  for (double r : rewards) sum += r_star - r;
  return sum;
}

double empirical_regret(const TrialHistory& history, double r_star) {
  const auto totals = history.totals();
  return empirical_regret(std::span<const double>(totals), r_star);
}

double best_observed_regret(const TrialHistory& history) {
  const auto totals = history.totals();
  if (totals.empty()) throw Error("regret of an empty history is undefined");
  return empirical_regret(std::span<const double>(totals),
                          *std::max_element(totals.begin(), totals.end()));
}

std::vector<double> submartingale_deltas(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error("reward deltas need at least two trials");
  std::vector<double> out;
  out.reserve(rewards.size() - 1);
  for (std::size_t i = 1; i < rewards.size(); ++i) out.push_back(rewards[i] - rewards[i - 1]);
  return out;
}

std::vector<double> submartingale_deltas(const TrialHistory& history) {
  const auto totals = history.totals();
  return submartingale_deltas(std::span<const double>(totals));
}

}  // namespace sciloop::bandit
