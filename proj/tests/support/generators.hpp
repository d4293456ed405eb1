#pragma once

// Seeded random inputs for property tests.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "sciloop/cells.hpp"

namespace gen {

using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// One line drawn from a mix of code, cell headers, unicode and odd whitespace.
inline std::string random_line(Rng& rng) {
  static const std::vector<std::string> pieces = {
      "x = 1",   "# %% model", "# %%",  "#%% not a header", "    return u", "\t",     "",
      "π ≈ 3.14", "λ=0.01 ∂u/∂t", "日本語", "emoji 🚀", "\r",            "a\rb",   "# %% dup",
      "  # %% indented", "print('# %% inside')", "\xc3\xa9t\xc3\xa9"};
  std::string line;
  const int parts = uniform(rng, 0, 3);
  for (int i = 0; i < parts; ++i) line += pieces[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(pieces.size()) - 1))];
  return line;
}

/// Arbitrary text: 0..max_lines lines, optional trailing newline.
inline std::string random_text(Rng& rng, int max_lines = 40) {
  const int n = uniform(rng, 0, max_lines);
  std::string out;
  for (int i = 0; i < n; ++i) {
    out += random_line(rng);
    if (i + 1 < n || uniform(rng, 0, 1) == 1) out += '\n';
  }
  return out;
}

/// Cell-structured script with `cells` headers and a few body lines each.
inline std::string random_script(Rng& rng, int cells) {
  std::string out = "import math\n";
  for (int c = 0; c < cells; ++c) {
    out += "# %% cell" + std::to_string(uniform(rng, 0, cells)) + "\n";
    const int body = uniform(rng, 0, 8);
    for (int i = 0; i < body; ++i) out += "v" + std::to_string(c) + "_" + std::to_string(i) + " = " + std::to_string(uniform(rng, 0, 99)) + "\n";
  }
  return out;
}

inline std::vector<std::string> random_lines(Rng& rng, int max) {
  std::vector<std::string> out(static_cast<std::size_t>(uniform(rng, 0, max)));
  for (auto& l : out) l = "new_" + std::to_string(uniform(rng, 0, 999));
  return out;
}

/// Valid patch for one cell: disjoint replace/delete ranges plus inserts at
/// positions not strictly inside a range.
inline sciloop::cells::CellPatch random_patch(Rng& rng, const sciloop::cells::CellScript& script) {
  using namespace sciloop::cells;
  CellPatch p;
  p.cell_index = uniform(rng, 0, static_cast<int>(script.cells.size()) - 1);
  const int n = static_cast<int>(script.cells[static_cast<std::size_t>(p.cell_index)].lines.size());
  std::vector<bool> covered(static_cast<std::size_t>(n) + 1, false);  // covered[i]: i strictly inside a range
  int pos = 0;
  while (pos < n) {
    if (uniform(rng, 0, 2) == 0) {
      const int end = std::min(n - 1, pos + uniform(rng, 0, 3));
      PatchOp op;
      op.kind = uniform(rng, 0, 1) ? OpKind::replace : OpKind::erase;
      op.start_line = pos;
      op.end_line = end;
      if (op.kind == OpKind::replace) op.lines = random_lines(rng, 4);
      p.ops.push_back(op);
      for (int i = pos + 1; i <= end; ++i) covered[static_cast<std::size_t>(i)] = true;
      pos = end + 1 + uniform(rng, 0, 2);
    } else {
      pos += 1 + uniform(rng, 0, 2);
    }
  }
  const int inserts = uniform(rng, 0, 3);
  for (int k = 0; k < inserts; ++k) {
    const int at = uniform(rng, 0, n);
    if (covered[static_cast<std::size_t>(at)]) continue;
    PatchOp op;
    op.kind = OpKind::insert;
    op.start_line = at;
    op.lines = random_lines(rng, 3);
    p.ops.push_back(op);
  }
  std::shuffle(p.ops.begin(), p.ops.end(), rng);
  return p;
}

/// Random DAG over n module names: edges only from higher to lower index.
inline std::map<std::string, std::vector<std::string>> random_dag(Rng& rng, int n) {
  std::map<std::string, std::vector<std::string>> deps;
  for (int i = 0; i < n; ++i) {
    auto& d = deps["m" + std::to_string(i)];
    for (int j = 0; j < i; ++j) {
      if (uniform(rng, 0, 4) == 0) d.push_back("m" + std::to_string(j));
    }
    std::shuffle(d.begin(), d.end(), rng);
  }
  return deps;
}

}  // namespace gen
