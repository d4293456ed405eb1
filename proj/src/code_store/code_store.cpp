#include "sciloop/code_store.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "sciloop/process.hpp"

namespace fs = std::filesystem;

namespace sciloop::store {

namespace {

std::string chunk_name(int ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03d.chunk", ordinal);
  return buf;
}

std::string join_words(std::string_view text) {
  std::string out;
  for (const auto& w : tokenize_words(text)) {
    out += w;
    out += ' ';
  }
  return out;
}

double keyword_coverage(const std::vector<std::string>& query_words,
                        const std::set<std::string>& doc_words) {
  if (query_words.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& w : query_words) hit += doc_words.count(w);
  return static_cast<double>(hit) / static_cast<double>(query_words.size());
}

std::string normalize_method(std::string m) {
  m = to_lower(m);
  for (char& c : m) {
    if (c == ' ' || c == '-') c = '_';
  }
  return m;
}

bool has_any(const std::string& s, std::initializer_list<const char*> needles) {
  return std::any_of(needles.begin(), needles.end(),
                     [&](const char* n) { return s.find(n) != std::string::npos; });
}

Json metadata_json(const Metadata& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::library: return "library";
    case Provenance::librarian_generated: return "librarian_generated";
    case Provenance::deposited: return "deposited";
  }
  return "library";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "library") return Provenance::library;
  if (s == "librarian_generated") return Provenance::librarian_generated;
  if (s == "deposited") return Provenance::deposited;
  throw InvariantError("unknown module provenance '" + s + "'");
}

NoTemplateError::NoTemplateError(double best_score)
    : Error("no template scored above the similarity floor (best " + std::to_string(best_score) +
            ")"),
      best_(best_score) {}

std::vector<std::string> split_keep_newlines(const std::string& source) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < source.size()) {
    const auto nl = source.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(source.substr(start));
      break;
    }
    lines.push_back(source.substr(start, nl - start + 1));
    start = nl + 1;
  }
  return lines;
}

std::vector<LineRange> window_partition(int line_count, int window) {
  std::vector<LineRange> out;
  for (int s = 1; s <= line_count; s += window) out.emplace_back(s, std::min(line_count, s + window - 1));
  return out;
}

bool is_partition(const std::vector<LineRange>& ranges, int line_count) {
  int next = 1;
  for (const auto& [s, e] : ranges) {
    if (s != next || e < s || e > line_count) return false;
    next = e + 1;
  }
  return next == line_count + 1;
}

std::vector<LineRange> repair_partition(const std::vector<LineRange>& proposed, int line_count,
                                        std::vector<std::string>& repairs) {
  std::vector<LineRange> clamped;
  for (auto [s, e] : proposed) {
    const auto orig = std::make_pair(s, e);
    s = std::clamp(s, 1, std::max(1, line_count));
    e = std::clamp(e, 1, std::max(1, line_count));
    if (s > e) {
      repairs.push_back("dropped empty range [" + std::to_string(orig.first) + ", " +
                        std::to_string(orig.second) + "]");
      continue;
    }
    if (std::make_pair(s, e) != orig) {
      repairs.push_back("clamped [" + std::to_string(orig.first) + ", " +
                        std::to_string(orig.second) + "] to [" + std::to_string(s) + ", " +
                        std::to_string(e) + "]");
    }
    clamped.emplace_back(s, e);
  }
  std::stable_sort(clamped.begin(), clamped.end());
  std::vector<LineRange> out;
  int next = 1;
  for (const auto& [s, e] : clamped) {
    if (e < next) {
      repairs.push_back("dropped range [" + std::to_string(s) + ", " + std::to_string(e) +
                        "] already covered");
      continue;
    }
    if (s != next) {
      repairs.push_back("moved start of [" + std::to_string(s) + ", " + std::to_string(e) +
                        "] to line " + std::to_string(next));
    }
    out.emplace_back(next, e);
    next = e + 1;
  }
  if (next <= line_count) {
    if (!proposed.empty()) {
      repairs.push_back("added range [" + std::to_string(next) + ", " +
                        std::to_string(line_count) + "] to cover the tail");
    }
    out.emplace_back(next, line_count);
  }
  return out;
}

SplitResult split_script(const std::string& source, llm::Backend* backend,
                         const std::string& system_prompt) {
  const auto lines = split_keep_newlines(source);
  const int n = static_cast<int>(lines.size());
  if (n == 0) throw InvariantError("cannot split an empty script");
  SplitResult result;
  auto fallback = [&](const std::string& why) {
    result.ranges = window_partition(n);
    result.fallback = true;
    result.repairs.push_back("fixed windows used: " + why);
    return result;
  };
  if (!backend) return fallback("no backend");
  std::string numbered;
  for (int i = 0; i < n; ++i) numbered += std::to_string(i + 1) + ": " + lines[i];
  if (!numbered.empty() && numbered.back() != '\n') numbered += '\n';
  llm::ChatRequest req;
  req.role_id = "splitter";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", "Script has " + std::to_string(n) + " lines.\n" + numbered});
  req.response_schema = "split_ranges";
  std::vector<LineRange> proposed;
  try {
    proposed = llm::ask_structured<std::vector<LineRange>>(*backend, req, [](const Json& j) {
      if (!j.is_object() || !j.contains("ranges") || !j["ranges"].is_array()) {
        throw InvariantError("reply needs a 'ranges' array");
      }
      std::vector<LineRange> r;
      for (const auto& p : j["ranges"]) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
          throw InvariantError("each range must be [start, end]");
        }
        r.emplace_back(p[0].get<int>(), p[1].get<int>());
      }
      return r;
    });
  } catch (const llm::MissingFixtureError&) {
    throw;
  } catch (const Error& e) {
    return fallback(e.what());
  }
  if (proposed.empty()) return fallback("splitter proposed no ranges");
  result.ranges = repair_partition(proposed, n, result.repairs);
  return result;
}

Metadata analyze_snippet(const std::string& source, llm::Backend& backend,
                         const std::string& system_prompt) {
  if (trim(source).empty()) throw InvariantError("cannot analyze an empty snippet");
  llm::ChatRequest req;
  req.role_id = "analyzer";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", source});
  req.response_schema = "snippet_metadata";
  return llm::ask_structured<Metadata>(backend, req, [](const Json& j) {
    Metadata m;
    m["description"] = require_string(j, "description");
    for (const char* key : {"equation", "method", "domain_group"}) {
      if (j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty()) {
        m[key] = j[key].get<std::string>();
      }
    }
    const auto tags = string_list(j, "tags");
    if (!tags.empty()) {
      std::string joined;
      for (const auto& t : tags) joined += (joined.empty() ? "" : ", ") + t;
      m["tags"] = joined;
    }
    return m;
  });
}

std::string metadata_card(const Metadata& m) {
  std::string card;
  for (const char* key : {"title", "description", "equation", "method", "domain_group", "tags"}) {
    auto it = m.find(key);
    if (it != m.end() && !it->second.empty()) card += it->second + "\n";
  }
  return card;
}

CodeStore::CodeStore(std::string root) : root_(std::move(root)) {
  fs::create_directories(fs::path(root_) / "templates");
  fs::create_directories(fs::path(root_) / "modules");
  load_manifest();
}

std::string CodeStore::template_dir(const std::string& id) const {
  return (fs::path(root_) / "templates" / id).string();
}

bool CodeStore::keyword_only() const {
  std::lock_guard lock(mu_);
  return keyword_only_ || embedder_ == nullptr;
}

std::vector<double> CodeStore::embed_or_empty(const std::string& text) const {
  if (!embedder_ || keyword_only_) return {};
  try {
    return embedder_->embed(text);
  } catch (const Error&) {
    keyword_only_ = true;
    return {};
  }
}

void CodeStore::load_manifest() {
  const fs::path path = fs::path(root_) / "manifest.jsonl";
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw StoreError("corrupt manifest line " + std::to_string(lineno));
    }
    const std::string kind = j.value("kind", "");
    if (kind == "template") {
      TemplateEntry e;
      e.id = j.at("id").get<std::string>();
      for (const auto& [k, v] : j.at("metadata").items()) e.metadata[k] = v.get<std::string>();
      for (const auto& c : j.at("chunks")) {
        e.ranges.emplace_back(c.at("start_line").get<int>(), c.at("end_line").get<int>());
      }
      if (j.contains("card_embedding") && j["card_embedding"].is_array()) {
        e.card_embedding = j["card_embedding"].get<std::vector<double>>();
      }
      if (j.contains("chunk_embeddings") && j["chunk_embeddings"].is_array()) {
        e.chunk_embeddings = j["chunk_embeddings"].get<std::vector<std::vector<double>>>();
      }
      e.card_words = join_words(metadata_card(e.metadata));
      for (std::size_t k = 0; k < e.ranges.size(); ++k) {
        e.chunk_words.push_back(join_words(read_file(template_dir(e.id) + "/" + chunk_name(static_cast<int>(k) + 1))));
      }
      templates_.push_back(std::move(e));
    } else if (kind == "module") {
      ModuleRecord m;
      m.id = j.at("id").get<std::string>();
      m.description = j.value("description", "");
      m.dependencies = j.at("dependencies").get<std::vector<std::string>>();
      m.provenance = provenance_from_string(j.at("provenance").get<std::string>());
      m.source_text = read_file((fs::path(root_) / "modules" / j.at("sha256").get<std::string>()).string());
      modules_[m.id] = std::move(m);
    } else {
      throw StoreError("unknown manifest record kind on line " + std::to_string(lineno));
    }
  }
}

void CodeStore::append_manifest(const Json& line) {
  const fs::path path = fs::path(root_) / "manifest.jsonl";
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw StoreError("cannot append to " + path.string());
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw StoreError("write failed on " + path.string());
}

std::string CodeStore::put_template(const std::string& source, Metadata metadata,
                                    const std::vector<LineRange>& ranges) {
  const auto lines = split_keep_newlines(source);
  const int n = static_cast<int>(lines.size());
  if (n == 0) throw InvariantError("cannot store an empty template");
  if (!is_partition(ranges, n)) throw InvariantError("chunk ranges do not partition the template");
  const std::string id = sha256_hex(source);
  std::lock_guard lock(mu_);
  for (const auto& t : templates_) {
    if (t.id == id) return id;
  }
  TemplateEntry e;
  e.id = id;
  e.metadata = std::move(metadata);
  e.ranges = ranges;
  Json chunks = Json::array();
  std::string reassembled;
  int ordinal = 0;
  for (const auto& [s, end] : ranges) {
    ++ordinal;
    std::string text;
    for (int i = s; i <= end; ++i) text += lines[i - 1];
    write_file(template_dir(id) + "/" + chunk_name(ordinal), text);
    reassembled += text;
    chunks.push_back(Json{{"ordinal", ordinal}, {"start_line", s}, {"end_line", end},
                          {"sha256", sha256_hex(text)}});
    e.chunk_words.push_back(join_words(text));
    e.chunk_embeddings.push_back(embed_or_empty(text));
  }
  if (reassembled != source) throw StoreError("chunk reassembly mismatch for " + id);
  e.card_words = join_words(metadata_card(e.metadata));
  e.card_embedding = embed_or_empty(metadata_card(e.metadata));
  if (keyword_only_) {
    e.card_embedding.clear();
    e.chunk_embeddings.assign(e.ranges.size(), {});
  }
  Json line{{"kind", "template"}, {"id", id}, {"metadata", metadata_json(e.metadata)},
            {"chunks", chunks}};
  line["card_embedding"] = e.card_embedding.empty() ? Json(nullptr) : Json(e.card_embedding);
  const bool any_chunk_embedding =
      std::any_of(e.chunk_embeddings.begin(), e.chunk_embeddings.end(),
                  [](const auto& v) { return !v.empty(); });
  line["chunk_embeddings"] = any_chunk_embedding ? Json(e.chunk_embeddings) : Json(nullptr);
  append_manifest(line);
  templates_.push_back(std::move(e));
  return id;
}

bool CodeStore::has_template(const std::string& id) const {
  std::lock_guard lock(mu_);
  return std::any_of(templates_.begin(), templates_.end(),
                     [&](const TemplateEntry& t) { return t.id == id; });
}

std::vector<ChunkRecord> CodeStore::chunks(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = std::find_if(templates_.begin(), templates_.end(),
                         [&](const TemplateEntry& t) { return t.id == id; });
  if (it == templates_.end()) throw StoreError("unknown template " + id);
  std::vector<ChunkRecord> out;
  for (std::size_t k = 0; k < it->ranges.size(); ++k) {
    ChunkRecord c;
    c.template_id = id;
    c.ordinal = static_cast<int>(k) + 1;
    c.start_line = it->ranges[k].first;
    c.end_line = it->ranges[k].second;
    c.text = read_file(template_dir(id) + "/" + chunk_name(c.ordinal));
    if (k < it->chunk_embeddings.size()) c.embedding = it->chunk_embeddings[k];
    out.push_back(std::move(c));
  }
  return out;
}

TemplateRecord CodeStore::get_template(const std::string& id) const {
  TemplateRecord r;
  r.id = id;
  for (const auto& c : chunks(id)) {
    r.source_text += c.text;
    r.chunk_ids.push_back(id + "/" + chunk_name(c.ordinal).substr(0, 3));
  }
  if (sha256_hex(r.source_text) != id) throw StoreError("template " + id + " failed its hash check");
  std::lock_guard lock(mu_);
  for (const auto& t : templates_) {
    if (t.id == id) r.metadata = t.metadata;
  }
  return r;
}

std::size_t CodeStore::template_count() const {
  std::lock_guard lock(mu_);
  return templates_.size();
}

void CodeStore::put_module(const ModuleRecord& module) {
  if (module.id.empty()) throw InvariantError("module id is empty");
  std::lock_guard lock(mu_);
  if (auto it = modules_.find(module.id); it != modules_.end()) {
    if (it->second.source_text == module.source_text) return;
    throw StoreError("module '" + module.id + "' already stored with different source");
  }
  const std::string hash = sha256_hex(module.source_text);
  write_file((fs::path(root_) / "modules" / hash).string(), module.source_text);
  append_manifest(Json{{"kind", "module"},
                       {"id", module.id},
                       {"description", module.description},
                       {"dependencies", module.dependencies},
                       {"provenance", to_string(module.provenance)},
                       {"sha256", hash}});
  modules_[module.id] = module;
}

std::optional<ModuleRecord> CodeStore::get_module(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = modules_.find(id);
  if (it == modules_.end()) return std::nullopt;
  return it->second;
}

std::size_t CodeStore::module_count() const {
  std::lock_guard lock(mu_);
  return modules_.size();
}

std::vector<SearchHit> CodeStore::search(const std::string& query, const Metadata& filters,
                                         std::size_t limit) const {
  std::lock_guard lock(mu_);
  std::vector<SearchHit> hits;
  if (templates_.empty() || trim(query).empty()) return hits;
  const auto qwords = tokenize_words(query);
  const std::vector<double> qvec = embed_or_empty(query);
  for (const auto& t : templates_) {
    bool pass = true;
    for (const auto& [k, v] : filters) {
      auto it = t.metadata.find(k);
      if (it == t.metadata.end() || it->second != v) pass = false;
    }
    if (!pass) continue;
    std::set<std::string> words;
    for (const auto& w : tokenize_words(t.card_words)) words.insert(w);
    for (const auto& cw : t.chunk_words) {
      for (const auto& w : tokenize_words(cw)) words.insert(w);
    }
    double score = keyword_coverage(qwords, words);
    if (!qvec.empty()) {
      if (!t.card_embedding.empty()) score = std::max(score, llm::cosine_similarity(qvec, t.card_embedding));
      for (const auto& ce : t.chunk_embeddings) {
        if (!ce.empty()) score = std::max(score, llm::cosine_similarity(qvec, ce));
      }
    }
    if (score > 0.0) hits.push_back({t.id, score, t.metadata});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.template_id < b.template_id;
  });
  if (hits.size() > limit) hits.resize(limit);
  return hits;
}

RetrievalResult retrieve_template(const std::string& query, const CodeStore& store,
                                  const Metadata& filters, double floor) {
  RetrievalResult r;
  r.candidates = store.search(query, filters, 5);
  const double best = r.candidates.empty() ? 0.0 : r.candidates.front().score;
  if (r.candidates.empty() || best < floor) throw NoTemplateError(best);
  r.record = store.get_template(r.candidates.front().template_id);
  return r;
}

TemplateVerdict validate_template(const TemplateRecord& record,
                                  const concept_team::FormalProblem& problem,
                                  llm::Backend* backend, const std::string& system_prompt) {
  auto it = record.metadata.find("method");
  const std::string method = it == record.metadata.end() ? std::string() : normalize_method(it->second);
  const std::string character = concept_team::classify_character(problem);
  const std::string text = to_lower(problem.title + " " + problem.pde_or_task);
  const bool hyperbolic = character == "hyperbolic" || has_any(text, {"shock"});
  TemplateVerdict v;
  auto decide = [&](bool ok, std::string rule) {
    v.accepted = ok;
    v.rule = rule;
    v.rationale = (ok ? "accepted: " : "mismatch: ") + rule;
    return v;
  };
  const bool spectral = has_any(method, {"spectral", "fourier_galerkin", "pseudospectral"});
  const bool dg = has_any(method, {"discontinuous_galerkin", "dgsem"}) || method == "dg";
  const bool cg = has_any(method, {"continuous_galerkin", "finite_element"}) || method == "cg" ||
                  method == "fem";
  const bool fv = has_any(method, {"finite_volume"});
  const bool learned = has_any(method, {"pinn", "physics_informed", "deeponet", "operator",
                                        "neural", "kan", "mlp"});
  if (spectral && hyperbolic) {
    return decide(false, "numerical_methods: global spectral methods do not suit hyperbolic or "
                         "shock-forming problems");
  }
  if ((dg || fv) && hyperbolic) {
    return decide(true, "numerical_methods: hyperbolic problems use discontinuous Galerkin or "
                        "finite volume schemes");
  }
  if (cg && character == "elliptic") {
    return decide(true, "numerical_methods: elliptic problems and elasticity use continuous "
                        "Galerkin");
  }
  if (cg && hyperbolic) {
    return decide(false, "numerical_methods: advection-dominated finite element problems use "
                         "discontinuous Galerkin");
  }
  if (spectral && (character == "elliptic" || character == "parabolic") &&
      has_any(to_lower(problem.boundary_conditions), {"periodic"})) {
    return decide(true, "numerical_methods: smooth problems on simple periodic geometries suit "
                        "spectral methods");
  }
  if (learned) {
    return decide(true, "learned representation; classical method-selection rules do not apply");
  }
  if (!backend) {
    v.accepted = true;
    v.rationale = "no rule applied and no validator available; accepted by default";
    return v;
  }
  llm::ChatRequest req;
  req.role_id = "validator";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", "## Problem\n" + problem.describe() + "\n\n## Template metadata\n" +
                                      metadata_card(record.metadata)});
  req.response_schema = "template_verdict";
  return llm::ask_structured<TemplateVerdict>(*backend, req, [](const Json& j) {
    TemplateVerdict t;
    const std::string verdict = to_lower(require_string(j, "verdict"));
    if (verdict != "accepted" && verdict != "mismatch") {
      throw InvariantError("verdict must be accepted or mismatch");
    }
    t.accepted = verdict == "accepted";
    t.rationale = require_string(j, "rationale");
    return t;
  });
}

CollectedModules collect_modules(const std::vector<std::string>& names, const CodeStore& store) {
  if (names.empty()) throw InvariantError("no module names requested");
  CollectedModules out;
  std::map<std::string, int> state;  // 1 visiting, 2 done
  std::set<std::string> missing;
  std::function<void(const std::string&, std::vector<std::string>&)> visit =
      [&](const std::string& name, std::vector<std::string>& stack) {
        if (state[name] == 2) return;
        if (state[name] == 1) {
          std::string cycle;
          for (const auto& s : stack) cycle += s + " -> ";
          throw DependencyCycleError("module dependency cycle: " + cycle + name);
        }
        auto module = store.get_module(name);
        if (!module) {
          state[name] = 2;
          if (missing.insert(name).second) out.missing.push_back(name);
          return;
        }
        state[name] = 1;
        stack.push_back(name);
        for (const auto& dep : module->dependencies) visit(dep, stack);
        stack.pop_back();
        state[name] = 2;
        out.found.push_back(*module);
      };
  for (const auto& n : names) {
    std::vector<std::string> stack;
    visit(n, stack);
  }
  return out;
}

ModuleRecord generate_missing_module(const std::string& name, const std::string& spec,
                                     const std::string& compat_context, CodeStore& store,
                                     llm::Backend& backend, const std::string& system_prompt,
                                     const SyntaxCheck& check) {
  if (trim(name).empty()) throw InvariantError("module specification names no component");
  if (auto existing = store.get_module(name)) return *existing;
  llm::ChatRequest req;
  req.role_id = "librarian";
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", "## Component\n" + name + "\n\n## Specification\n" + spec +
                                      "\n\n## Surrounding code\n" + compat_context});
  req.response_schema = "module";
  std::string last_error;
  for (int round = 1; round <= 2; ++round) {
    ModuleRecord m = llm::ask_structured<ModuleRecord>(backend, req, [&name](const Json& j) {
      ModuleRecord r;
      r.id = name;
      r.description = j.contains("description") && j["description"].is_string()
                          ? j["description"].get<std::string>()
                          : std::string();
      r.source_text = require_string(j, "source");
      if (trim(r.source_text).empty()) throw InvariantError("module source is empty");
      r.dependencies = string_list(j, "dependencies");
      r.provenance = Provenance::librarian_generated;
      return r;
    });
    if (check.command.empty()) {
      store.put_module(m);
      return m;
    }
    const std::string dir = (fs::path(store.root()) / "tmp").string();
    fs::create_directories(dir);
    const std::string file = dir + "/" + slugify(name) + ".src";
    const std::string err = dir + "/" + slugify(name) + ".err";
    write_file(file, m.source_text);
    ProcessSpec ps;
    for (const auto& tok : check.command) ps.argv.push_back(tok == "{file}" ? file : tok);
    ps.cwd = dir;
    ps.env = allowlisted_environment({"PATH", "HOME", "LANG"});
    ps.timeout_seconds = check.timeout_seconds;
    ps.stderr_path = err;
    const ProcessResult pr = run_process(ps);
    if (pr.exit_code == 0 && !pr.timed_out) {
      store.put_module(m);
      return m;
    }
    last_error = fs::exists(err) ? read_file(err) : "syntax check failed";
    req.messages.push_back({"assistant", m.source_text});
    req.messages.push_back({"user", "The module failed the syntax check:\n" + last_error +
                                        "\nReturn the corrected module as JSON."});
  }
  throw GenerationError("generated module '" + name + "' failed validation twice: " + trim(last_error));
}

DepositResult deposit_validated(const std::string& source, const Metadata& base_metadata,
                                bool session_succeeded, CodeStore& store, llm::Backend* backend,
                                const std::string& analyzer_prompt,
                                const std::string& splitter_prompt) {
  if (!session_succeeded) throw InvariantError("only code from a successful session is deposited");
  if (source.empty()) throw InvariantError("cannot deposit an empty code state");
  DepositResult r;
  r.template_id = sha256_hex(source);
  if (store.has_template(r.template_id)) {
    r.duplicate = true;
    return r;
  }
  Metadata meta = base_metadata;
  bool analyzed = false;
  if (backend) {
    try {
      for (const auto& [k, v] : analyze_snippet(source, *backend, analyzer_prompt)) meta.emplace(k, v);
      analyzed = true;
    } catch (const llm::MissingFixtureError&) {
      throw;
    } catch (const Error&) {
      analyzed = false;
    }
  }
  if (!analyzed) {
    r.minimal_metadata = true;
    if (!meta.count("description")) meta["description"] = meta.count("title") ? meta["title"] : "deposited code";
  }
  r.split = split_script(source, backend, splitter_prompt);
  r.template_id = store.put_template(source, std::move(meta), r.split.ranges);
  return r;
}

}  // namespace sciloop::store
