#include "sciloop/scaffolding.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

namespace sciloop::scaffolding {

namespace {

const std::map<std::string, std::string>& charters() {
  static const std::map<std::string, std::string> table = {
      {"coordinator",
       "You are the Coordinator. Turn the user's request into a formal problem statement.\n"
       "Reply with one JSON object: {\"title\", \"pde_or_task\", \"domain_spec\", "
       "\"boundary_conditions\", \"initial_conditions\", \"time_dependent\": bool, "
       "\"character\": \"elliptic\"|\"parabolic\"|\"hyperbolic\"|\"\", "
       "\"reference_data\": {\"path\", \"format_notes\"} or null, "
       "\"problem_class\": \"forward\"|\"inverse\", \"outputs_required\": [filename], "
       "\"method_hint\": \"classical\"|\"piml\"|\"operator\"|\"\"}.\n"
       "Leave a field empty rather than inventing conditions the user did not give."},
      {"gatekeeper",
       "You are the Gatekeeper. Decide which generative group runs the problem and in what "
       "order. Groups: scic (classical solvers), sciml_piml (physics-informed networks), "
       "sciml_operator (operator networks).\n"
       "Reply with JSON: {\"steps\": [{\"group\", \"task\", \"problem_class\", "
       "\"consumes\": [filename], \"produces\": [filename]}], \"rationale\"}.\n"
       "Data-generating steps come before the steps that consume their files. When a classical "
       "solver and a learned model could both work, prefer the classical route."},
      {"filing",
       "You are the Filing agent. Propose a short programmatic directory name for the project.\n"
       "Reply with JSON: {\"project_name\"} using lower-case letters, digits and underscores."},
      {"strategist",
       "You are the Strategist. Propose the next research action for the experiment.\n"
       "Pick exactly one identifier per axis from the action space below. Answer the latest "
       "diagnosis cure explicitly when one exists, and treat user directives as binding.\n"
       "Reply with JSON: {\"rep\", \"constraint\", \"opt\", \"narrative\", "
       "\"required_modules\": [id], \"training_plan\", \"acceptance_targets\": {metric: "
       "threshold}}."},
      {"critic",
       "You are the Critic. Check the proposed strategy against the blueprints and the problem.\n"
       "Reply with JSON: {\"verdict\": \"accepted\"|\"rejected\", \"requirements\": [text], "
       "\"cited_principle\"}. A rejection must list at least one requirement."},
      {"advisor",
       "You are the Advisor. Analyse the run: convergence, where the error concentrates, and "
       "whether the strategy was realised. Map each failure to a cure from the blueprints. End "
       "with a verdict: continue, revert to a named run, stop with success, or stop because "
       "options are exhausted. Grade details (0-15), optimality (0-15) and the fraction of "
       "stated constraints satisfied (0-1)."},
      {"advisor_parser",
       "You are the Advisor Parser. Convert the advisor report into JSON: "
       "{\"failure_modes\": [text], \"prescribed_cure\", \"grades\": {\"details\", "
       "\"optimality\", \"consistency\", \"rationale\"}, \"verdict\": \"continue\"|"
       "\"revert_to\"|\"stop_success\"|\"stop_exhausted\", \"revert_iteration\": int or null}."},
      {"planner",
       "You are the Planner. Study the cell-indexed script and the directive. Describe which "
       "cells must change and how. Touch only the cells the directive requires."},
      {"planner_parser",
       "You are the Planner Parser. Convert the plan into JSON: {\"targets\": "
       "[{\"cell_index\": int, \"intent\"}]} with 0-based cell indices."},
      {"patcher",
       "You are the Patcher. Emit one JSON patch for the given cell: {\"cell_index\": int, "
       "\"ops\": [{\"op\": \"replace\"|\"insert\"|\"delete\", \"start_line\": int, "
       "\"end_line\": int, \"lines\": [text]}]}. Lines are 0-based and cell-local; end_line "
       "is inclusive and used by replace and delete; insert places lines before start_line "
       "(start_line may equal the cell length to append)."},
      {"inspector",
       "You are the Inspector. Audit whether the script faithfully realises the strategy.\n"
       "Reply with JSON: {\"faithful\": bool, \"violations\": [{\"requirement\", "
       "\"evidence\"}]}."},
      {"debugger",
       "You are the Debugger. Read the failing script and its error output.\n"
       "Reply with JSON: {\"error_class\", \"suspect_cells\": [int], \"fix_directive\"}."},
      {"analyzer",
       "You are the Analyzer. Describe the code snippet for a searchable store.\n"
       "Reply with JSON: {\"description\", \"equation\", \"method\", \"domain_group\", "
       "\"tags\": [text]}. Omit equation and method for utility code."},
      {"splitter",
       "You are the Splitter. Choose the line ranges at which the script splits into logical "
       "pieces. Reply with JSON: {\"ranges\": [[start, end], ...]} using 1-based inclusive "
       "line numbers that cover the whole script."},
      {"validator",
       "You are the Validator. Decide whether the retrieved method suits the problem's "
       "mathematical character. Reply with JSON: {\"verdict\": \"accepted\"|\"mismatch\", "
       "\"rationale\"}."},
      {"librarian",
       "You are the Librarian. Write a missing module from its specification so that it fits "
       "the surrounding code. Reply with JSON: {\"id\", \"description\", \"source\", "
       "\"dependencies\": [id]}."},
      {"summarizer",
       "You are the Summarizer. Condense the older trial rows into a short paragraph: what was "
       "tried, what failed, and the best reward so far."},
  };
  return table;
}

const std::map<std::string, std::vector<std::string>>& default_groups() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"universal_approximation", {"sciml_piml", "sciml_operator", "storage"}},
      {"piml", {"sciml_piml"}},
      {"operator_learning", {"sciml_operator"}},
      {"optimization", {"sciml_piml", "sciml_operator"}},
      {"numerical_methods", {"scic", "storage"}},
  };
  return table;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string truncate_to_tokens(std::string text, std::size_t budget_tokens) {
  const std::size_t max_chars = budget_tokens * 4;
  if (text.size() <= max_chars) return text;
  const std::string marker = "\n[truncated]";
  if (max_chars <= marker.size()) return text.substr(0, max_chars);
  text.resize(max_chars - marker.size());
  return text + marker;
}

}  // namespace

const std::vector<std::string>& blueprint_ids() {
  static const std::vector<std::string> ids = {"universal_approximation", "piml",
                                               "operator_learning", "optimization",
                                               "numerical_methods"};
  return ids;
}

const std::vector<std::string>& group_ids() {
  static const std::vector<std::string> ids = {"scic", "sciml_piml", "sciml_operator", "storage",
                                               "general"};
  return ids;
}

const std::vector<std::string>& role_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& [role, text] : charters()) v.push_back(role);
    return v;
  }();
  return ids;
}

MissingBlueprintError::MissingBlueprintError(std::vector<std::string> missing)
    : Error("missing blueprint(s): " + join(missing, ", ")), missing_(std::move(missing)) {}

BlueprintRegistry::BlueprintRegistry(std::vector<Blueprint> blueprints) {
  for (auto& b : blueprints) {
    if (trim(b.body).empty()) throw InvariantError("blueprint '" + b.id + "' has an empty body");
    by_id_[b.id] = std::move(b);
  }
  std::vector<std::string> missing;
  for (const auto& id : blueprint_ids()) {
    if (!by_id_.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw MissingBlueprintError(missing);
}

const Blueprint& BlueprintRegistry::get(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw InvariantError("unknown blueprint '" + id + "'");
  return it->second;
}

std::vector<const Blueprint*> BlueprintRegistry::for_group(const std::string& group) const {
  std::vector<const Blueprint*> out;
  for (const auto& id : blueprint_ids()) {
    const auto& b = by_id_.at(id);
    if (std::find(b.applicable_groups.begin(), b.applicable_groups.end(), group) !=
        b.applicable_groups.end()) {
      out.push_back(&b);
    }
  }
  return out;
}

BlueprintRegistry load_blueprints(const std::string& directory) {
  namespace fs = std::filesystem;
  std::vector<Blueprint> found;
  std::vector<std::string> missing;
  for (const auto& id : blueprint_ids()) {
    const fs::path path = fs::path(directory) / (id + ".md");
    if (!fs::exists(path)) {
      missing.push_back(id);
      continue;
    }
    Blueprint b;
    b.id = id;
    std::string text = read_file(path.string());
    if (text.rfind("groups:", 0) == 0) {
      const auto eol = text.find('\n');
      b.applicable_groups = split_csv(text.substr(7, eol == std::string::npos ? std::string::npos
                                                                              : eol - 7));
      text = eol == std::string::npos ? std::string() : text.substr(eol + 1);
    } else {
      b.applicable_groups = default_groups().at(id);
    }
    b.body = trim(text);
    found.push_back(std::move(b));
  }
  if (!missing.empty()) throw MissingBlueprintError(missing);
  return BlueprintRegistry(std::move(found));
}

PromptBundle compose_system_prompt(const std::string& role, const std::string& group,
                                   const BlueprintRegistry& registry,
                                   const PromptOptions& options) {
  auto charter = charters().find(role);
  if (charter == charters().end()) throw InvariantError("unknown role '" + role + "'");
  const auto& groups = group_ids();
  if (std::find(groups.begin(), groups.end(), group) == groups.end()) {
    throw InvariantError("unknown group '" + group + "'");
  }
  PromptBundle bundle;
  std::string text = charter->second + "\n";
  const auto blueprints = registry.for_group(group);
  if (!blueprints.empty()) {
    text += "\n## Blueprints\n";
    for (const Blueprint* b : blueprints) {
      text += "\n" + b->body + "\n";
      bundle.included_blueprints.push_back(b->id);
    }
  }
  if (options.action_space) {
    text += "\n## Action space\n" + options.action_space->describe() + "\n";
  }
  if (!trim(options.extra_rules).empty()) {
    text += "\n## Rules\n" + trim(options.extra_rules) + "\n";
  }
  bundle.system_prompt = std::move(text);
  bundle.context_budget = estimate_tokens(bundle.system_prompt);
  if (bundle.context_budget > options.budget_tokens) {
    throw InvariantError("system prompt for role '" + role + "' needs ~" +
                         std::to_string(bundle.context_budget) + " tokens, budget is " +
                         std::to_string(options.budget_tokens));
  }
  return bundle;
}

std::string history_row(const bandit::TrialRecord& r) {
  std::ostringstream row;
  row << r.iteration << " | " << r.action.rep << "/" << r.action.constraint << "/"
      << r.action.opt << " | " << bandit::reward_total(r.reward) << " | "
      << to_string(r.diagnosis.verdict) << " | " << r.diagnosis.prescribed_cure;
  return row.str();
}

std::string summarize_history(const bandit::TrialHistory& history, llm::Backend* backend,
                              const SummaryOptions& options) {
  if (options.budget_tokens == 0) throw InvariantError("history budget must be positive");
  if (history.empty()) return {};
  const std::string header = "iteration | rep/constraint/opt | reward | verdict | cure\n";
  std::vector<std::string> rows;
  for (const auto& r : history.records()) rows.push_back(history_row(r));

  std::string full = header;
  for (const auto& row : rows) full += row + "\n";
  if (estimate_tokens(full) <= options.budget_tokens) return full;

  const std::size_t k = std::min(options.recent_verbatim, rows.size());
  const std::size_t older = rows.size() - k;
  std::string recent = header;
  for (std::size_t i = older; i < rows.size(); ++i) recent += rows[i] + "\n";

  std::string digest;
  if (older > 0) {
    if (backend) {
      try {
        llm::ChatRequest req;
        req.role_id = "summarizer";
        req.system_prompt = charters().at("summarizer");
        std::string body = header;
        for (std::size_t i = 0; i < older; ++i) body += rows[i] + "\n";
        req.messages.push_back({"user", body});
        req.budget = static_cast<int>(std::max<std::size_t>(64, options.budget_tokens / 4));
        digest = trim(backend->complete(req).text);
      } catch (const Error&) {
        digest.clear();
      }
    }
    if (digest.empty()) {
      const auto totals = history.totals();
      const auto best = std::max_element(totals.begin(), totals.begin() + older);
      std::ostringstream d;
      d << "iterations 1-" << older << " omitted; best reward " << *best << " at iteration "
        << (best - totals.begin()) + 1;
      digest = d.str();
    }
  }
  std::string out = older > 0 ? "Earlier: " + digest + "\n" + recent : recent;
  return truncate_to_tokens(std::move(out), options.budget_tokens);
}

}  // namespace sciloop::scaffolding
