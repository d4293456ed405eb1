#include <doctest.h>

#include "sciloop/code_store.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace sciloop;
using namespace sciloop::store;

namespace {

std::string numbered_source(int lines) {
  std::string s;
  for (int i = 1; i <= lines; ++i) s += "line_" + std::to_string(i) + " = " + std::to_string(i) + "\n";
  return s;
}

std::vector<LineRange> whole(const std::string& source) {
  return {{1, static_cast<int>(split_keep_newlines(source).size())}};
}

void seed_three(CodeStore& s) {
  s.put_template("# %% model\nnet = pinn(periodic=True)\n",
                 {{"description", "Physics-informed network for viscous Burgers with periodic boundaries"},
                  {"equation", "u_t + u u_x = nu u_xx"},
                  {"method", "pinn"},
                  {"domain_group", "sciml_piml"},
                  {"tags", "burgers, pinn, periodic"}},
                 whole("x\nx\n"));
  s.put_template("# %% solver\ndg = dgsem(order=3)\n",
                 {{"description", "Discontinuous Galerkin solver for the compressible Euler equations"},
                  {"equation", "compressible Euler"},
                  {"method", "discontinuous_galerkin"},
                  {"domain_group", "scic"},
                  {"tags", "euler, dg, shocks"}},
                 whole("x\nx\n"));
  s.put_template("# %% fem\nK = assemble()\n",
                 {{"description", "Continuous Galerkin finite elements for linear elasticity"},
                  {"equation", "div sigma = f"},
                  {"method", "continuous_galerkin"},
                  {"domain_group", "scic"},
                  {"tags", "elasticity, fem"}},
                 whole("x\nx\n"));
}

ModuleRecord module(const std::string& id, std::vector<std::string> deps) {
  return {id, "module " + id, "def " + id + "():\n    pass\n", std::move(deps), Provenance::library};
}

concept_team::FormalProblem problem(const std::string& title, const std::string& pde,
                                    const std::string& character = {}) {
  concept_team::FormalProblem p;
  p.title = title;
  p.pde_or_task = pde;
  p.character = character;
  return p;
}

SyntaxCheck python_parse() {
  SyntaxCheck c;
  c.command = {"python3", "-c", "import ast, sys; ast.parse(open(sys.argv[1]).read())", "{file}"};
  return c;
}

}  // namespace

TEST_CASE("line splitting keeps terminators") {
  CHECK(split_keep_newlines("a\nb") == std::vector<std::string>{"a\n", "b"});
  CHECK(split_keep_newlines("a\n") == std::vector<std::string>{"a\n"});
  CHECK(split_keep_newlines("").empty());
}

TEST_CASE("window partitions and repairs") {
  CHECK(window_partition(250) == std::vector<LineRange>{{1, 120}, {121, 240}, {241, 250}});
  CHECK(window_partition(5) == std::vector<LineRange>{{1, 5}});
  std::vector<std::string> repairs;
  CHECK(repair_partition({{1, 6}, {7, 10}}, 10, repairs) == std::vector<LineRange>{{1, 6}, {7, 10}});
  CHECK(repairs.empty());
  const auto fixed = repair_partition({{1, 6}, {4, 12}, {0, 2}}, 10, repairs);
  CHECK(is_partition(fixed, 10));
  CHECK_FALSE(repairs.empty());
  CHECK_FALSE(is_partition({{1, 4}, {6, 10}}, 10));
  CHECK_FALSE(is_partition({{1, 5}, {5, 10}}, 10));
}

TEST_CASE("property: repaired partitions are always gap-free and disjoint") {
  gen::Rng rng(404);
  for (int i = 0; i < 500; ++i) {
    const int n = gen::uniform(rng, 1, 300);
    std::vector<LineRange> proposed(static_cast<std::size_t>(gen::uniform(rng, 0, 8)));
    for (auto& r : proposed) r = {gen::uniform(rng, -5, n + 5), gen::uniform(rng, -5, n + 5)};
    std::vector<std::string> repairs;
    CHECK(is_partition(repair_partition(proposed, n, repairs), n));
  }
}

TEST_CASE("splitter reply becomes the partition") {
  llm::MockBackend m;
  m.add("splitter", R"({"ranges": [[1, 6], [7, 10]]})");
  const auto r = split_script(numbered_source(10), &m, "split");
  CHECK(r.ranges == std::vector<LineRange>{{1, 6}, {7, 10}});
  CHECK_FALSE(r.fallback);

  llm::MockBackend overlap;
  overlap.add("splitter", R"({"ranges": [[1, 6], [5, 10]]})");
  const auto o = split_script(numbered_source(10), &overlap, "split");
  CHECK(is_partition(o.ranges, 10));
  CHECK_FALSE(o.repairs.empty());

  llm::MockBackend down;
  down.fail_role("splitter");
  const auto f = split_script(numbered_source(300), &down, "split");
  CHECK(f.fallback);
  CHECK(f.ranges == window_partition(300));
  CHECK(split_script(numbered_source(3), nullptr, "split").fallback);
  CHECK_THROWS_AS(split_script("", &m, "split"), InvariantError);
}

TEST_CASE("analyzer metadata") {
  llm::MockBackend m;
  m.add("analyzer", R"({"description": "DGSEM solver for Euler", "equation": "compressible Euler",
                       "method": "discontinuous_galerkin", "domain_group": "scic", "tags": ["dg", "euler"]})");
  const auto meta = analyze_snippet("using Trixi\nsolver = DGSEM(3)\n", m, "analyze");
  CHECK(meta.at("method") == "discontinuous_galerkin");
  CHECK(meta.at("tags") == "dg, euler");

  llm::MockBackend util;
  util.add("analyzer", R"({"description": "Saves a figure with a timestamped name", "equation": "", "method": ""})");
  const auto u = analyze_snippet("def save(fig):\n    fig.savefig('x.png')\n", util, "analyze");
  CHECK(u.size() == 1);
  CHECK(u.count("description") == 1);
  CHECK_THROWS_AS(analyze_snippet("   ", util, "analyze"), InvariantError);
}

TEST_CASE("store round trip is byte-identical and survives reopening") {
  testsupport::TempDir tmp;
  const std::string source = "a\n# %% b\nc\r\nd";
  std::string id;
  {
    CodeStore s(tmp.path());
    id = s.put_template(source, {{"description", "x"}}, {{1, 2}, {3, 4}});
    CHECK(id == sha256_hex(source));
    CHECK(s.put_template(source, {{"description", "y"}}, {{1, 4}}) == id);
    CHECK(s.template_count() == 1);
    const auto chunks = s.chunks(id);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[1].start_line == 3);
    CHECK(chunks[1].text == "c\r\nd");
    CHECK_THROWS_AS(s.put_template("x\ny\n", {}, {{1, 1}}), Error);
  }
  CodeStore reopened(tmp.path());
  CHECK(reopened.template_count() == 1);
  const auto rec = reopened.get_template(id);
  CHECK(rec.source_text == source);
  CHECK(rec.chunk_ids.size() == 2);
  CHECK(std::filesystem::exists(tmp.sub("manifest.jsonl")));
  CHECK(std::filesystem::exists(tmp.sub("templates/" + id + "/001.chunk")));
}

TEST_CASE("search ranks, filters and handles an empty store") {
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  llm::MockBackend embedder;
  s.set_embedder(&embedder);
  CHECK(s.search("periodic PINN Burgers").empty());
  seed_three(s);
  const auto hits = s.search("periodic PINN Burgers");
  REQUIRE_FALSE(hits.empty());
  CHECK(hits.front().metadata.at("method") == "pinn");
  CHECK_FALSE(s.keyword_only());
  const auto scic = s.search("galerkin", {{"domain_group", "scic"}});
  CHECK(scic.size() == 2);
  for (const auto& h : scic) CHECK(h.metadata.at("domain_group") == "scic");
}

TEST_CASE("embedding failure downgrades to keyword search") {
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  llm::MockBackend embedder;
  embedder.set_embeddings_enabled(false);
  s.set_embedder(&embedder);
  seed_three(s);
  CHECK(s.keyword_only());
  const auto hits = s.search("burgers pinn periodic");
  REQUIRE_FALSE(hits.empty());
  CHECK(hits.front().metadata.at("method") == "pinn");
}

TEST_CASE("retrieval returns exact bytes or a no-template error") {
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  seed_three(s);
  const auto r = retrieve_template("galerkin elasticity", s);
  CHECK(r.record.source_text == "# %% fem\nK = assemble()\n");
  CHECK(r.candidates.size() >= 2);
  CHECK(r.candidates[0].score >= r.candidates[1].score);
  CHECK_THROWS_AS(retrieve_template("quantum chromodynamics lattice", s), NoTemplateError);
  CodeStore empty(tmp.sub("empty"));
  CHECK_THROWS_AS(retrieve_template("anything", empty), NoTemplateError);
}

TEST_CASE("template validation follows the method-selection rules") {
  TemplateRecord spectral;
  spectral.metadata = {{"method", "spectral"}};
  const auto shock = problem("Inviscid Burgers shock formation", "u_t + u u_x = 0");
  const auto v1 = validate_template(spectral, shock, nullptr, "");
  CHECK_FALSE(v1.accepted);
  CHECK(v1.rule.find("numerical_methods") == 0);

  TemplateRecord dg;
  dg.metadata = {{"method", "discontinuous_galerkin"}};
  CHECK(validate_template(dg, shock, nullptr, "").accepted);

  TemplateRecord cg;
  cg.metadata = {{"method", "continuous_galerkin"}};
  CHECK(validate_template(cg, problem("Linear elasticity", "div sigma = f", "elliptic"), nullptr, "").accepted);

  TemplateRecord other;
  other.metadata = {{"method", "lattice_boltzmann"}};
  llm::MockBackend m;
  m.add("validator", R"({"verdict": "mismatch", "rationale": "needs a compressible solver"})");
  const auto asked = validate_template(other, shock, &m, "validate");
  CHECK_FALSE(asked.accepted);
  CHECK(asked.rule.empty());
  CHECK(m.call_count("validator") == 1);
}

TEST_CASE("module collection orders dependencies first") {
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  s.put_module(module("weights_util", {}));
  s.put_module(module("vRBA", {"weights_util"}));
  const auto c = collect_modules({"vRBA"}, s);
  REQUIRE(c.found.size() == 2);
  CHECK(c.found[0].id == "weights_util");
  CHECK(c.found[1].id == "vRBA");
  CHECK(c.missing.empty());

  const auto u = collect_modules({"unknown_module"}, s);
  CHECK(u.found.empty());
  CHECK(u.missing == std::vector<std::string>{"unknown_module"});
  CHECK_THROWS_AS(collect_modules({}, s), InvariantError);

  s.put_module(module("a", {"b"}));
  s.put_module(module("b", {"a"}));
  CHECK_THROWS_AS(collect_modules({"a"}, s), DependencyCycleError);

  CodeStore reopened(tmp.path());
  CHECK(reopened.module_count() == 4);
  CHECK(reopened.get_module("vRBA")->dependencies == std::vector<std::string>{"weights_util"});
}

TEST_CASE("property: module order matches the graph-sort oracle") {
  gen::Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    testsupport::TempDir tmp;
    CodeStore s(tmp.path());
    const auto dag = gen::random_dag(rng, gen::uniform(rng, 1, 12));
    for (const auto& [id, deps] : dag) s.put_module(module(id, deps));
    std::vector<std::string> requested;
    for (const auto& [id, deps] : dag) {
      if (gen::uniform(rng, 0, 2) == 0) requested.push_back(id);
    }
    if (requested.empty()) requested.push_back(dag.begin()->first);
    const auto c = collect_modules(requested, s);
    std::vector<std::string> order;
    for (const auto& m : c.found) order.push_back(m.id);
    CHECK(oracle::valid_dependency_order(dag, requested, order));
  }
}

TEST_CASE("librarian generation") {
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  llm::MockBackend m;
  m.add("librarian", Json{{"description", "periodic wavelet features"},
                          {"source", "import math\n\ndef embed(x, k):\n    return [math.sin(k * x)]\n"},
                          {"dependencies", Json::array()}}
                         .dump());
  const auto gen = generate_missing_module("Periodic_Wavelet_Embedding", "periodic wavelet basis",
                                           "model cell", s, m, "librarian", python_parse());
  CHECK(gen.provenance == Provenance::librarian_generated);
  CHECK(s.get_module("Periodic_Wavelet_Embedding"));

  const auto again = generate_missing_module("Periodic_Wavelet_Embedding", "x", "y", s, m, "librarian",
                                             python_parse());
  CHECK(again == gen);
  CHECK(m.call_count("librarian") == 1);

  llm::MockBackend broken;
  broken.add("librarian", R"({"source": "def broken(:\n"})");
  broken.add("librarian", R"({"source": "def still broken(:\n"})");
  CHECK_THROWS_AS(generate_missing_module("Broken", "x", "y", s, broken, "librarian", python_parse()),
                  GenerationError);
  CHECK_FALSE(s.get_module("Broken"));

  llm::MockBackend repaired;
  repaired.add("librarian", R"({"source": "def f(:\n"})");
  repaired.add("librarian", R"({"source": "def f():\n    return 1\n"})");
  CHECK(generate_missing_module("Fixed", "x", "y", s, repaired, "librarian", python_parse()).id == "Fixed");
  CHECK(repaired.calls()[1].request.messages.back().text.find("syntax check") != std::string::npos);
}

TEST_CASE("deposit analyzes, splits and dedupes") {
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  const std::string code = numbered_source(10);
  llm::MockBackend m;
  m.add("analyzer", R"({"description": "Viscous Burgers PINN", "method": "pinn", "tags": ["burgers"]})");
  m.add("splitter", R"({"ranges": [[1, 6], [7, 10]]})");
  const auto r = deposit_validated(code, {{"title", "Burgers"}}, true, s, &m, "analyze", "split");
  CHECK_FALSE(r.duplicate);
  CHECK(s.chunks(r.template_id).size() == 2);
  CHECK(retrieve_template("burgers", s).record.source_text == code);

  const auto dup = deposit_validated(code, {}, true, s, &m, "analyze", "split");
  CHECK(dup.duplicate);
  CHECK(s.template_count() == 1);
  CHECK_THROWS_AS(deposit_validated(numbered_source(3), {}, false, s, &m, "a", "s"), InvariantError);

  llm::MockBackend down;
  down.fail_role("analyzer");
  down.fail_role("splitter");
  const auto minimal = deposit_validated(numbered_source(4), {{"title", "t"}}, true, s, &down, "a", "s");
  CHECK(minimal.minimal_metadata);
  CHECK(minimal.split.fallback);
}

TEST_CASE("property: deposit then retrieve is byte-identical") {
  gen::Rng rng(9);
  testsupport::TempDir tmp;
  CodeStore s(tmp.path());
  for (int i = 0; i < 30; ++i) {
    std::string text = gen::random_text(rng, 60) + "\nunique_marker_" + std::to_string(i) + "\n";
    const int n = static_cast<int>(split_keep_newlines(text).size());
    std::vector<std::string> repairs;
    const auto ranges = repair_partition({{1, gen::uniform(rng, 1, n)}, {gen::uniform(rng, 1, n), n}}, n, repairs);
    const auto id = s.put_template(text, {{"description", "random " + std::to_string(i)}}, ranges);
    CHECK(s.get_template(id).source_text == text);
  }
}
