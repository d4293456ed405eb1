#pragma once

// Content-addressed template and module store with a JSONL manifest, plus the
// storage and retrieval agents that feed and query it.
//
// Layout under the store root:
//   manifest.jsonl                one record per template or module
//   templates/<sha256>/NNN.chunk  chunk files, concatenation == source
//   modules/<sha256>              module source

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sciloop/conceptualization.hpp"
#include "sciloop/json_io.hpp"
#include "sciloop/llm.hpp"

namespace sciloop::store {

using Metadata = std::map<std::string, std::string>;  // description, equation, method, domain_group, tags
using LineRange = std::pair<int, int>;                // 1-based, inclusive

struct ChunkRecord {
  std::string template_id;
  int ordinal = 0;
  int start_line = 0;
  int end_line = 0;
  std::string text;
  std::vector<double> embedding;  // empty when keyword-only
};

struct TemplateRecord {
  std::string id;  // sha256 of source_text
  std::string source_text;
  Metadata metadata;
  std::vector<std::string> chunk_ids;  // "<id>/NNN"
};

enum class Provenance { library, librarian_generated, deposited };
std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct ModuleRecord {
  std::string id;
  std::string description;
  std::string source_text;
  std::vector<std::string> dependencies;
  Provenance provenance = Provenance::library;
  bool operator==(const ModuleRecord&) const = default;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class NoTemplateError : public Error {
 public:
  explicit NoTemplateError(double best_score);
  double best_score() const { return best_; }

 private:
  double best_;
};

class DependencyCycleError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Source split into lines that keep their terminating '\n'.
std::vector<std::string> split_keep_newlines(const std::string& source);

/// Fixed-size windows covering [1, line_count].
std::vector<LineRange> window_partition(int line_count, int window = 120);

/// Turns any proposal into a gap-free, overlap-free partition of
/// [1, line_count]: ranges are clamped, sorted, and each start is snapped to
/// the previous end + 1. Notes every change in `repairs`.
std::vector<LineRange> repair_partition(const std::vector<LineRange>& proposed, int line_count,
                                        std::vector<std::string>& repairs);

bool is_partition(const std::vector<LineRange>& ranges, int line_count);

struct SplitResult {
  std::vector<LineRange> ranges;
  std::vector<std::string> repairs;
  bool fallback = false;  // fixed windows were used
};

/// Splitter call; degenerate or failed replies fall back to 120-line windows.
SplitResult split_script(const std::string& source, llm::Backend* backend,
                         const std::string& system_prompt);

/// Analyzer call. Utility snippets get a description only; solver code also
/// gets equation and method. Throws llm::SchemaError after the re-ask.
Metadata analyze_snippet(const std::string& source, llm::Backend& backend,
                         const std::string& system_prompt);

struct SearchHit {
  std::string template_id;
  double score = 0.0;
  Metadata metadata;
};

class CodeStore {
 public:
  /// Opens (and creates) a store rooted at `root`, replaying the manifest.
  explicit CodeStore(std::string root);

  const std::string& root() const { return root_; }

  /// Embeddings come from this backend; failures switch the index to
  /// keyword-only scoring. Null means keyword-only.
  void set_embedder(llm::Backend* backend) { embedder_ = backend; }
  bool keyword_only() const;

  /// Stores source chunked at `ranges` (must partition the source). Returns
  /// the content id; an identical source is stored once.
  std::string put_template(const std::string& source, Metadata metadata,
                           const std::vector<LineRange>& ranges);
  bool has_template(const std::string& id) const;
  /// Reassembles the template from its chunk files.
  TemplateRecord get_template(const std::string& id) const;
  std::vector<ChunkRecord> chunks(const std::string& id) const;
  std::size_t template_count() const;

  void put_module(const ModuleRecord& module);
  std::optional<ModuleRecord> get_module(const std::string& id) const;
  std::size_t module_count() const;

  /// Ranks templates by max(cosine similarity, keyword coverage) over the
  /// metadata card and every chunk, after exact-match metadata filters.
  std::vector<SearchHit> search(const std::string& query, const Metadata& filters = {},
                                std::size_t limit = 5) const;

 private:
  struct TemplateEntry {
    std::string id;
    Metadata metadata;
    std::vector<LineRange> ranges;
    std::vector<std::vector<double>> chunk_embeddings;
    std::vector<double> card_embedding;
    std::vector<std::string> chunk_words;  // lower-case, per chunk, joined
    std::string card_words;
  };

  void load_manifest();
  void append_manifest(const Json& line);
  std::vector<double> embed_or_empty(const std::string& text) const;
  std::string template_dir(const std::string& id) const;

  std::string root_;
  llm::Backend* embedder_ = nullptr;
  mutable bool keyword_only_ = false;
  mutable std::mutex mu_;
  std::vector<TemplateEntry> templates_;
  std::map<std::string, ModuleRecord> modules_;
};

/// "description equation method domain_group tags" card used for scoring.
std::string metadata_card(const Metadata& m);

struct RetrievalResult {
  TemplateRecord record;
  std::vector<SearchHit> candidates;  // every hit considered, best first
};

/// Best template above `floor`; throws NoTemplateError otherwise.
RetrievalResult retrieve_template(const std::string& query, const CodeStore& store,
                                  const Metadata& filters = {}, double floor = 0.35);

struct TemplateVerdict {
  bool accepted = true;
  std::string rationale;
  std::string rule;  // blueprint rule applied; empty when the backend decided
};

/// Method/problem fit. Rules from the numerical methods blueprint decide when
/// they apply; otherwise the validator role is asked.
TemplateVerdict validate_template(const TemplateRecord& record,
                                  const concept_team::FormalProblem& problem,
                                  llm::Backend* backend, const std::string& system_prompt);

struct CollectedModules {
  std::vector<ModuleRecord> found;  // dependencies before dependents
  std::vector<std::string> missing;
};

/// Requested modules plus transitive dependencies in topological order.
/// Throws DependencyCycleError on a cycle.
CollectedModules collect_modules(const std::vector<std::string>& names, const CodeStore& store);

struct SyntaxCheck {
  std::vector<std::string> command;  // "{file}" replaced by the module path
  double timeout_seconds = 30.0;
};

/// Returns the stored module when `name` exists; otherwise asks the librarian,
/// checks syntax with `check` (if configured), allows one repair round, stores
/// the result and returns it. Throws GenerationError after a second failure.
ModuleRecord generate_missing_module(const std::string& name, const std::string& spec,
                                     const std::string& compat_context, CodeStore& store,
                                     llm::Backend& backend, const std::string& system_prompt,
                                     const SyntaxCheck& check);

struct DepositResult {
  std::string template_id;
  bool duplicate = false;
  bool minimal_metadata = false;  // analysis failed
  SplitResult split;
};

/// Analyze -> split -> index. Requires `session_succeeded`.
DepositResult deposit_validated(const std::string& source, const Metadata& base_metadata,
                                bool session_succeeded, CodeStore& store, llm::Backend* backend,
                                const std::string& analyzer_prompt,
                                const std::string& splitter_prompt);

}  // namespace sciloop::store
