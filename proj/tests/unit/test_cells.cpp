#include <doctest.h>

#include "sciloop/cells.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace sciloop;
using namespace sciloop::cells;

namespace {

const char* kThreeCells =
    "import math\n"
    "# %% config\n"
    "A = 1\n"
    "# %% model\n"
    "B = 2\n"
    "C = 3\n"
    "# %% train\n"
    "fit()\n";

PatchOp replace(int s, int e, std::vector<std::string> lines) {
  return {OpKind::replace, s, e, std::move(lines)};
}
PatchOp insert(int s, std::vector<std::string> lines) { return {OpKind::insert, s, -1, std::move(lines)}; }
PatchOp erase(int s, int e) { return {OpKind::erase, s, e, {}}; }

}  // namespace

TEST_CASE("parse counts cells and keeps the preamble") {
  const auto s = parse_cells(kThreeCells);
  CHECK(s.preamble == std::vector<std::string>{"import math"});
  REQUIRE(s.cells.size() == 3);
  CHECK(s.cells[1].name == "model");
  CHECK(s.cells[1].header == "# %% model");
  CHECK(s.cells[1].lines == std::vector<std::string>{"B = 2", "C = 3"});
  CHECK(s.trailing_newline);
  CHECK(s.render() == kThreeCells);
  CHECK(s.find_cell("train") == 2);
  CHECK(s.find_cell("missing") == -1);
}

TEST_CASE("no delimiters means a preamble-only script") {
  const auto s = parse_cells("a\nb\n");
  CHECK(s.cells.empty());
  CHECK(s.preamble.size() == 2);
}

TEST_CASE("duplicate and blank cell names are made unique") {
  const auto s = parse_cells("# %% a\n# %% a\n# %% a\n# %%\n");
  REQUIRE(s.cells.size() == 4);
  CHECK(s.cells[0].name == "a");
  CHECK(s.cells[1].name == "a_2");
  CHECK(s.cells[2].name == "a_3");
  CHECK(s.cells[3].name == "cell_3");
}

TEST_CASE("custom and invalid delimiter patterns") {
  const auto s = parse_cells("x\n-- [block one]\ny\n", "^-- \\[(.*)\\]$");
  REQUIRE(s.cells.size() == 1);
  CHECK(s.cells[0].name == "block one");
  CHECK_THROWS_AS(parse_cells("x", "(unclosed"), InvariantError);
}

TEST_CASE("global line numbers map to cells") {
  const auto s = parse_cells(kThreeCells);
  CHECK(s.header_lines() == std::vector<int>{2, 4, 7});
  CHECK(s.cell_at_line(1) == -1);
  CHECK(s.cell_at_line(2) == 0);
  CHECK(s.cell_at_line(3) == 0);
  CHECK(s.cell_at_line(6) == 1);
  CHECK(s.cell_at_line(8) == 2);
  CHECK(s.cell_at_line(9) == -1);
  CHECK(s.numbered().find("[cell 1] model\n  0: B = 2\n  1: C = 3\n") != std::string::npos);
}

TEST_CASE("property: render inverts parse on arbitrary text") {
  gen::Rng rng(2718);
  for (int i = 0; i < 1000; ++i) {
    const std::string text = gen::random_text(rng);
    CHECK(parse_cells(text).render() == text);
  }
}

TEST_CASE("patch JSON schema is strict") {
  const Json good = Json::parse(
      R"({"cell_index": 1, "ops": [{"op": "replace", "start_line": 0, "end_line": 0, "lines": ["B = 5"]},
                                  {"op": "insert", "start_line": 2, "lines": ["D = 4"]},
                                  {"op": "delete", "start_line": 1, "end_line": 1}]})");
  const auto p = CellPatch::from_json(good);
  CHECK(p.ops[2].kind == OpKind::erase);
  CHECK(CellPatch::from_json(p.to_json()) == p);
  CHECK_THROWS_AS(CellPatch::from_json(Json{{"cell_index", 0}, {"ops", Json::array()}, {"extra", 1}}),
                  InvariantError);
  CHECK_THROWS_AS(CellPatch::from_json(Json::parse(R"({"cell_index": 0, "ops": [{"op": "move", "start_line": 0}]})")),
                  InvariantError);
  CHECK_THROWS_AS(CellPatch::from_json(Json::parse(R"({"cell_index": 0, "ops": [{"op": "insert", "start_line": 0}]})")),
                  InvariantError);
  CHECK_THROWS_AS(CellPatch::from_json(Json::parse(R"({"cell_index": "0", "ops": []})")), InvariantError);
}

TEST_CASE("empty patch is the identity") {
  const auto s = parse_cells(kThreeCells);
  CHECK(apply_patch(s, CellPatch{1, {}}) == s);
}

TEST_CASE("replacing two lines of a four-line cell with three lines") {
  const auto s = parse_cells("# %% c\nl0\nl1\nl2\nl3\n");
  CellPatch p{0, {replace(1, 2, {"n0", "n1", "n2"})}};
  const auto out = apply_patch(s, p);
  CHECK(out.cells[0].lines == std::vector<std::string>{"l0", "n0", "n1", "n2", "l3"});
  CHECK(out.cells[0].lines == oracle::splice(s.cells[0].lines, p));
}

TEST_CASE("ops address original positions regardless of list order") {
  const auto s = parse_cells("# %% c\nl0\nl1\nl2\nl3\n");
  CellPatch p{0, {insert(0, {"top"}), erase(1, 1), replace(3, 3, {"last"}), insert(4, {"end"}), insert(3, {"pre3"})}};
  const auto out = apply_patch(s, p);
  CHECK(out.cells[0].lines == std::vector<std::string>{"top", "l0", "l2", "pre3", "last", "end"});
  CHECK(out.cells[0].lines == oracle::splice(s.cells[0].lines, p));
}

TEST_CASE("invalid patches are rejected before any change") {
  const auto s = parse_cells(kThreeCells);
  CHECK_THROWS_AS(apply_patch(s, CellPatch{3, {}}), PatchError);
  CHECK_THROWS_AS(apply_patch(s, CellPatch{1, {replace(1, 2, {"x"})}}), PatchError);
  CHECK_THROWS_AS(apply_patch(s, CellPatch{1, {insert(3, {"x"})}}), PatchError);
  CHECK_THROWS_AS(apply_patch(s, CellPatch{1, {replace(0, 1, {}), erase(1, 1)}}), PatchError);
  CHECK_THROWS_AS(apply_patch(s, CellPatch{1, {replace(0, 1, {}), insert(1, {"in"})}}), PatchError);
  CHECK_THROWS_AS(apply_patch(s, CellPatch{1, {erase(1, 0)}}), PatchError);
  CHECK(s.render() == kThreeCells);
}

TEST_CASE("property: random patches match the splice oracle and touch one cell") {
  gen::Rng rng(31415);
  for (int i = 0; i < 300; ++i) {
    const auto s = parse_cells(gen::random_script(rng, gen::uniform(rng, 1, 6)));
    const auto p = gen::random_patch(rng, s);
    const auto out = apply_patch(s, p);
    CHECK(out.cells[static_cast<std::size_t>(p.cell_index)].lines ==
          oracle::splice(s.cells[static_cast<std::size_t>(p.cell_index)].lines, p));
    for (std::size_t c = 0; c < s.cells.size(); ++c) {
      if (static_cast<int>(c) != p.cell_index) CHECK(out.cells[c] == s.cells[c]);
    }
    CHECK(out.preamble == s.preamble);
    CHECK(parse_cells(out.render()).render() == out.render());
  }
}
