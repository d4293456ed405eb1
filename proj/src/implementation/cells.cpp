#include "sciloop/cells.hpp"

#include <algorithm>
#include <numeric>
#include <regex>
#include <set>

namespace sciloop::cells {

namespace {

std::vector<std::string> split_exact(std::string_view text, bool& trailing_newline) {
  std::vector<std::string> lines;
  trailing_newline = false;
  if (text.empty()) return lines;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
    if (start == text.size()) {
      trailing_newline = true;
      break;
    }
  }
  return lines;
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::replace: return "replace";
    case OpKind::insert: return "insert";
    case OpKind::erase: return "delete";
  }
  return "?";
}

}  // namespace

std::string CellScript::render() const {
  std::string out;
  bool first = true;
  auto emit = [&](const std::string& line) {
    if (!first) out += '\n';
    out += line;
    first = false;
  };
  for (const auto& l : preamble) emit(l);
  for (const auto& c : cells) {
    emit(c.header);
    for (const auto& l : c.lines) emit(l);
  }
  if (trailing_newline) out += '\n';
  return out;
}

std::string CellScript::numbered() const {
  std::string out;
  if (!preamble.empty()) {
    out += "[preamble, not editable]\n";
    for (const auto& l : preamble) out += "    " + l + "\n";
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += "[cell " + std::to_string(i) + "] " + cells[i].name + "\n";
    for (std::size_t j = 0; j < cells[i].lines.size(); ++j) {
      out += "  " + std::to_string(j) + ": " + cells[i].lines[j] + "\n";
    }
  }
  return out;
}

std::vector<int> CellScript::header_lines() const {
  std::vector<int> out;
  int line = static_cast<int>(preamble.size()) + 1;
  for (const auto& c : cells) {
    out.push_back(line);
    line += 1 + static_cast<int>(c.lines.size());
  }
  return out;
}

int CellScript::cell_at_line(int global_line) const {
  const auto headers = header_lines();
  int found = -1;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (global_line >= headers[i]) found = static_cast<int>(i);
  }
  if (found >= 0) {
    const int last = headers[found] + static_cast<int>(cells[found].lines.size());
    if (global_line > last) return -1;
  }
  return found;
}

int CellScript::find_cell(const std::string& name) const {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

CellScript parse_cells(std::string_view source, const std::string& delimiter_pattern) {
  std::regex re;
  try {
    re = std::regex(delimiter_pattern);
  } catch (const std::regex_error& e) {
    throw InvariantError("invalid cell delimiter pattern '" + delimiter_pattern + "': " + e.what());
  }
  CellScript script;
  script.delimiter_pattern = delimiter_pattern;
  std::set<std::string> used;
  for (auto& line : split_exact(source, script.trailing_newline)) {
    std::smatch m;
    if (std::regex_search(line, m, re)) {
      Cell cell;
      std::string base = m.size() > 1 ? trim(m[1].str()) : std::string();
      if (base.empty()) base = "cell_" + std::to_string(script.cells.size());
      std::string name = base;
      for (int n = 2; used.count(name); ++n) name = base + "_" + std::to_string(n);
      used.insert(name);
      cell.name = std::move(name);
      cell.header = std::move(line);
      script.cells.push_back(std::move(cell));
    } else if (script.cells.empty()) {
      script.preamble.push_back(std::move(line));
    } else {
      script.cells.back().lines.push_back(std::move(line));
    }
  }
  return script;
}

CellPatch CellPatch::from_json(const Json& j) {
  if (!j.is_object()) throw InvariantError("patch must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key != "cell_index" && key != "ops") {
      throw InvariantError("patch has unknown key '" + key + "'");
    }
  }
  CellPatch p;
  p.cell_index = require_int(j, "cell_index");
  if (!j.contains("ops") || !j["ops"].is_array()) throw InvariantError("patch needs an 'ops' array");
  for (const auto& o : j["ops"]) {
    if (!o.is_object()) throw InvariantError("patch op must be an object");
    for (const auto& [key, v] : o.items()) {
      if (key != "op" && key != "start_line" && key != "end_line" && key != "lines") {
        throw InvariantError("patch op has unknown key '" + key + "'");
      }
    }
    PatchOp op;
    const std::string kind = require_string(o, "op");
    if (kind == "replace") op.kind = OpKind::replace;
    else if (kind == "insert") op.kind = OpKind::insert;
    else if (kind == "delete") op.kind = OpKind::erase;
    else throw InvariantError("unknown patch op '" + kind + "'");
    op.start_line = require_int(o, "start_line");
    if (op.kind != OpKind::insert) op.end_line = require_int(o, "end_line");
    if (op.kind != OpKind::erase) {
      if (!o.contains("lines")) throw InvariantError("patch op '" + kind + "' needs 'lines'");
      op.lines = string_list(o, "lines");
    }
    p.ops.push_back(std::move(op));
  }
  return p;
}

Json CellPatch::to_json() const {
  Json ops = Json::array();
  for (const auto& op : this->ops) {
    Json o{{"op", op_name(op.kind)}, {"start_line", op.start_line}};
    if (op.kind != OpKind::insert) o["end_line"] = op.end_line;
    if (op.kind != OpKind::erase) o["lines"] = op.lines;
    ops.push_back(std::move(o));
  }
  return Json{{"cell_index", cell_index}, {"ops", std::move(ops)}};
}

void validate_patch(const CellScript& script, const CellPatch& patch) {
  if (patch.cell_index < 0 || patch.cell_index >= static_cast<int>(script.cells.size())) {
    throw PatchError("patch targets cell " + std::to_string(patch.cell_index) + " but the script has " +
                     std::to_string(script.cells.size()) + " cells");
  }
  const int n = static_cast<int>(script.cells[patch.cell_index].lines.size());
  std::vector<std::pair<int, int>> ranges;
  std::vector<int> inserts;
  for (std::size_t i = 0; i < patch.ops.size(); ++i) {
    const auto& op = patch.ops[i];
    const std::string where = "op " + std::to_string(i) + " (" + op_name(op.kind) + ")";
    if (op.kind == OpKind::insert) {
      if (op.start_line < 0 || op.start_line > n) {
        throw PatchError(where + ": insert position " + std::to_string(op.start_line) +
                         " outside [0, " + std::to_string(n) + "]");
      }
      inserts.push_back(op.start_line);
    } else {
      if (op.start_line < 0 || op.end_line < op.start_line || op.end_line >= n) {
        throw PatchError(where + ": range [" + std::to_string(op.start_line) + ", " +
                         std::to_string(op.end_line) + "] outside a " + std::to_string(n) +
                         "-line cell");
      }
      ranges.emplace_back(op.start_line, op.end_line);
    }
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first <= ranges[i - 1].second) {
      throw PatchError("patch ranges overlap at line " + std::to_string(ranges[i].first));
    }
  }
  for (int p : inserts) {
    for (const auto& [s, e] : ranges) {
      if (p > s && p <= e) {
        throw PatchError("insert at line " + std::to_string(p) + " falls inside range [" +
                         std::to_string(s) + ", " + std::to_string(e) + "]");
      }
    }
  }
}

CellScript apply_patch(const CellScript& script, const CellPatch& patch) {
  validate_patch(script, patch);
  std::vector<std::size_t> order(patch.ops.size());
  std::iota(order.begin(), order.end(), 0);
  // Descending start; range ops before inserts at the same position; inserts
  // sharing a position in reverse list order so the first listed ends up first.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = patch.ops[a];
    const auto& y = patch.ops[b];
    if (x.start_line != y.start_line) return x.start_line > y.start_line;
    const bool xi = x.kind == OpKind::insert;
    const bool yi = y.kind == OpKind::insert;
    if (xi != yi) return !xi;
    return a > b;
  });
  CellScript out = script;
  auto& lines = out.cells[patch.cell_index].lines;
  for (std::size_t idx : order) {
    const auto& op = patch.ops[idx];
    const auto begin = lines.begin() + op.start_line;
    switch (op.kind) {
      case OpKind::insert:
        lines.insert(begin, op.lines.begin(), op.lines.end());
        break;
      case OpKind::erase:
        lines.erase(begin, lines.begin() + op.end_line + 1);
        break;
      case OpKind::replace: {
        const auto pos = lines.erase(begin, lines.begin() + op.end_line + 1);
        lines.insert(pos, op.lines.begin(), op.lines.end());
        break;
      }
    }
  }
  return out;
}

}  // namespace sciloop::cells
