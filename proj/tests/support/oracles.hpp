#pragma once

// Independent reference implementations. Each one is written from the
// documented semantics without reusing library code, so agreement between the
// two is evidence rather than tautology.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sciloop/cells.hpp"

namespace oracle {

/// Forward single-pass splice. Ops address the original cell; inserts at a
/// position come before the range starting there, in list order.
inline std::vector<std::string> splice(const std::vector<std::string>& lines,
                                       const sciloop::cells::CellPatch& patch) {
  using sciloop::cells::OpKind;
  const int n = static_cast<int>(lines.size());
  std::vector<std::string> out;
  auto emit_inserts = [&](int pos) {
    for (const auto& op : patch.ops) {
      if (op.kind == OpKind::insert && op.start_line == pos) {
        out.insert(out.end(), op.lines.begin(), op.lines.end());
      }
    }
  };
  int i = 0;
  while (i < n) {
    emit_inserts(i);
    const sciloop::cells::PatchOp* range = nullptr;
    for (const auto& op : patch.ops) {
      if (op.kind != OpKind::insert && op.start_line == i) range = &op;
    }
    if (range) {
      if (range->kind == OpKind::replace) out.insert(out.end(), range->lines.begin(), range->lines.end());
      i = range->end_line + 1;
    } else {
      out.push_back(lines[static_cast<std::size_t>(i)]);
      ++i;
    }
  }
  emit_inserts(n);
  return out;
}

/// Checks `order` against a Kahn-style reference: it must contain exactly the
/// transitive closure of `requested` over `deps` (restricted to known nodes),
/// with every dependency placed before its dependent.
inline bool valid_dependency_order(const std::map<std::string, std::vector<std::string>>& deps,
                                   const std::vector<std::string>& requested,
                                   const std::vector<std::string>& order) {
  std::set<std::string> closure;
  std::deque<std::string> queue(requested.begin(), requested.end());
  while (!queue.empty()) {
    const std::string n = queue.front();
    queue.pop_front();
    if (!deps.count(n) || !closure.insert(n).second) continue;
    for (const auto& d : deps.at(n)) queue.push_back(d);
  }
  if (std::set<std::string>(order.begin(), order.end()) != closure || order.size() != closure.size()) {
    return false;
  }
  // Kahn: repeatedly remove nodes whose dependencies are all removed; the
  // given order must be one such elimination sequence.
  std::set<std::string> removed;
  for (const auto& n : order) {
    for (const auto& d : deps.at(n)) {
      if (deps.count(d) && !removed.count(d)) return false;
    }
    removed.insert(n);
  }
  return true;
}

inline double regret(const std::vector<double>& rewards, double r_star) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) sum = sum + (r_star - rewards[i]);
  return sum;
}

inline std::vector<double> deltas(const std::vector<double>& rewards) {
  std::vector<double> out;
  for (std::size_t i = 1; i < rewards.size(); ++i) out.push_back(rewards[i] - rewards[i - 1]);
  return out;
}

/// Precision credit through natural logarithms: cap at err <= eps, 0 at
/// err >= 10 eps, log-linear between.
inline double precision(double err, double eps, double cap) {
  if (!(err == err)) return 0.0;
  if (err <= eps) return cap;
  if (err >= 10.0 * eps) return 0.0;
  return cap * (std::log(10.0 * eps) - std::log(err)) / std::log(10.0);
}

/// Integrity rubric: 0 on failure, else 20 + 15 * present / required (15
/// when nothing is required).
inline double integrity(bool clean_exit, int present, int required) {
  if (!clean_exit) return 0.0;
  if (required == 0) return 35.0;
  return 20.0 + 15.0 * static_cast<double>(present) / static_cast<double>(required);
}

}  // namespace oracle
