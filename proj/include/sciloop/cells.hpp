#pragma once

// Cell-decomposed scripts and the deterministic JSON patch engine.
//
// A script is a preamble followed by cells. Each cell starts at a header line
// matching the delimiter pattern; capture group 1, trimmed, names the cell.
// Patch line indices are 0-based and local to the cell body (the header line
// is not addressable). All ops of one patch refer to positions in the
// original cell and must not overlap; they are applied in descending
// start_line order, so earlier positions never shift.

#include <string>
#include <string_view>
#include <vector>

#include "sciloop/common.hpp"
#include "sciloop/json_io.hpp"

namespace sciloop::cells {

inline constexpr const char* kDefaultDelimiter = "^# %%(.*)$";

struct Cell {
  std::string name;    // unique within the script after _2, _3 suffixing
  std::string header;  // the delimiter line, verbatim
  std::vector<std::string> lines;
  bool operator==(const Cell&) const = default;
};

struct CellScript {
  std::vector<std::string> preamble;
  std::vector<Cell> cells;
  bool trailing_newline = false;
  std::string delimiter_pattern = kDefaultDelimiter;

  std::string render() const;
  /// Cell listing with 0-based indices and line numbers, for agent prompts.
  std::string numbered() const;
  /// 1-based global line number of the header of each cell.
  std::vector<int> header_lines() const;
  /// Cell containing the 1-based global line, or -1 for the preamble.
  int cell_at_line(int global_line) const;
  int find_cell(const std::string& name) const;

  bool operator==(const CellScript&) const = default;
};

/// render(parse_cells(x)) == x for every input. Throws InvariantError for an
/// invalid pattern.
CellScript parse_cells(std::string_view source, const std::string& delimiter_pattern = kDefaultDelimiter);

enum class OpKind { replace, insert, erase };

struct PatchOp {
  OpKind kind = OpKind::replace;
  int start_line = 0;
  int end_line = -1;  // inclusive; replace and erase only
  std::vector<std::string> lines;  // replace and insert only
  bool operator==(const PatchOp&) const = default;
};

struct CellPatch {
  int cell_index = 0;
  std::vector<PatchOp> ops;

  /// Strict schema: unknown keys or wrong types raise InvariantError.
  static CellPatch from_json(const Json& j);
  Json to_json() const;
  bool operator==(const CellPatch&) const = default;
};

class PatchError : public Error {
 public:
  using Error::Error;
};

/// Throws PatchError on an unknown cell, an out-of-range op or overlapping ops.
void validate_patch(const CellScript& script, const CellPatch& patch);
/// Returns the patched script. Only patch.cell_index changes. The input is
/// never modified; errors are reported before any splice.
CellScript apply_patch(const CellScript& script, const CellPatch& patch);

}  // namespace sciloop::cells
