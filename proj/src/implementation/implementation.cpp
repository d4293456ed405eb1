#include "sciloop/implementation.hpp"

#include <algorithm>
#include <map>
#include <regex>

namespace sciloop::impl {

namespace {

std::string numbered_cell(const cells::Cell& cell) {
  std::string out;
  for (std::size_t i = 0; i < cell.lines.size(); ++i) {
    out += std::to_string(i) + ": " + cell.lines[i] + "\n";
  }
  return out;
}

std::vector<std::string> source_lines(const std::string& text) {
  std::vector<std::string> lines = split_lines(text);
  return lines;
}

void render_into(CodeState& state) {
  state.source = state.script.render();
  state.sha256 = sha256_hex(state.source);
}

void apply_plan(CodeState& state, const CellPlan& plan, llm::Backend& backend,
                const Prompts& prompts) {
  for (const auto& t : plan.targets) {
    cells::CellPatch patch;
    try {
      patch = emit_patch(state.script, t.cell_index, t.intent, backend, prompts.patcher);
    } catch (const cells::PatchError& e) {
      throw StageError("patch", e.what());
    }
    try {
      state.script = cells::apply_patch(state.script, patch);
    } catch (const cells::PatchError& e) {
      throw StageError("patch", e.what());
    }
    state.patches.push_back(std::move(patch));
  }
}

CellPlan plan_or_stage_error(const Directive& d, const cells::CellScript& script,
                             llm::Backend& backend, const Prompts& prompts, int max_targets) {
  try {
    return plan_targets(d, script, backend, prompts, max_targets);
  } catch (const llm::SchemaError& e) {
    throw StageError("plan", e.what());
  }
}

}  // namespace

StageError::StageError(std::string stage, const std::string& message)
    : Error(stage + ": " + message), stage_(std::move(stage)) {}

CellPlan plan_targets(const Directive& directive, const cells::CellScript& script,
                      llm::Backend& backend, const Prompts& prompts, int max_targets) {
  CellPlan plan;
  const int n = static_cast<int>(script.cells.size());
  const std::string script_view = script.numbered();

  llm::ChatRequest study;
  study.role_id = "planner";
  study.system_prompt = prompts.planner;
  study.messages.push_back({"user", "## Directive\n" + directive.text + "\n\n## Script (" +
                                        std::to_string(n) + " cells)\n" + script_view});
  plan.study = backend.complete(study).text;

  llm::ChatRequest parse;
  parse.role_id = "planner_parser";
  parse.system_prompt = prompts.planner_parser;
  parse.messages.push_back({"user", "## Plan\n" + plan.study + "\n\nThe script has " +
                                        std::to_string(n) + " cells (0.." +
                                        std::to_string(n - 1) + ")."});
  parse.response_schema = "cell_plan";
  auto raw = llm::ask_structured<std::vector<CellTarget>>(backend, parse, [](const Json& j) {
    if (!j.is_object() || !j.contains("targets") || !j["targets"].is_array()) {
      throw InvariantError("plan needs a 'targets' array");
    }
    std::vector<CellTarget> out;
    for (const auto& t : j["targets"]) {
      out.push_back({require_int(t, "cell_index"), require_string(t, "intent")});
    }
    return out;
  });

  std::map<int, std::string> merged;
  for (const auto& t : raw) {
    if (t.cell_index < 0 || t.cell_index >= n) {
      plan.repairs.push_back("dropped target cell " + std::to_string(t.cell_index) +
                             " (script has " + std::to_string(n) + " cells)");
      continue;
    }
    auto [it, inserted] = merged.emplace(t.cell_index, t.intent);
    if (!inserted) {
      it->second += "; " + t.intent;
      plan.repairs.push_back("merged duplicate target cell " + std::to_string(t.cell_index));
    }
  }
  for (int s : directive.suspect_cells) {
    if (s >= 0 && s < n && !merged.count(s)) {
      merged.emplace(s, directive.text);
      plan.repairs.push_back("added suspect cell " + std::to_string(s));
    }
  }
  for (const auto& [idx, intent] : merged) plan.targets.push_back({idx, intent});
  if (static_cast<int>(plan.targets.size()) > max_targets) {
    plan.repairs.push_back("kept the first " + std::to_string(max_targets) + " of " +
                           std::to_string(plan.targets.size()) + " targets");
    plan.targets.resize(static_cast<std::size_t>(max_targets));
  }
  return plan;
}

cells::CellPatch emit_patch(const cells::CellScript& script, int cell_index,
                            const std::string& intent, llm::Backend& backend,
                            const std::string& patcher_prompt) {
  if (cell_index < 0 || cell_index >= static_cast<int>(script.cells.size())) {
    throw cells::PatchError("patch target cell " + std::to_string(cell_index) + " does not exist");
  }
  if (trim(intent).empty()) return cells::CellPatch{cell_index, {}};
  const auto& cell = script.cells[cell_index];
  llm::ChatRequest req;
  req.role_id = "patcher";
  req.system_prompt = patcher_prompt;
  req.messages.push_back({"user", "## Cell " + std::to_string(cell_index) + " (" + cell.name +
                                      ", " + std::to_string(cell.lines.size()) + " lines)\n" +
                                      numbered_cell(cell) + "\n## Intent\n" + intent});
  req.response_schema = "cell_patch";
  try {
    return llm::ask_structured<cells::CellPatch>(backend, req, [&](const Json& j) {
      cells::CellPatch p = cells::CellPatch::from_json(j);
      if (p.cell_index != cell_index) {
        throw InvariantError("patch targets cell " + std::to_string(p.cell_index) +
                             ", expected " + std::to_string(cell_index));
      }
      try {
        cells::validate_patch(script, p);
      } catch (const cells::PatchError& e) {
        throw InvariantError(e.what());
      }
      return p;
    });
  } catch (const llm::SchemaError& e) {
    throw cells::PatchError("no valid patch for cell " + std::to_string(cell_index) + ": " +
                            e.what());
  }
}

InspectionVerdict inspect(const cells::CellScript& script, const policy::StrategyReport& strategy,
                          llm::Backend& backend, const std::string& inspector_prompt) {
  InspectionVerdict v;
  const std::string source = script.render();
  for (const auto& m : strategy.required_modules) {
    if (script.find_cell("module:" + m) < 0 && !contains_icase(source, m)) {
      v.violations.push_back({"required module " + m, "no cell or reference found in the script"});
    }
  }
  llm::ChatRequest req;
  req.role_id = "inspector";
  req.system_prompt = inspector_prompt;
  req.messages.push_back({"user", "## Strategy\n" + strategy.to_json().dump(2) + "\n\n## Script\n" +
                                      script.numbered()});
  req.response_schema = "inspection_verdict";
  try {
    const auto reply = llm::ask_structured<InspectionVerdict>(backend, req, [](const Json& j) {
      InspectionVerdict r;
      if (!j.is_object() || !j.contains("faithful") || !j["faithful"].is_boolean()) {
        throw InvariantError("verdict needs boolean 'faithful'");
      }
      r.faithful = j["faithful"].get<bool>();
      if (j.contains("violations") && j["violations"].is_array()) {
        for (const auto& x : j["violations"]) {
          r.violations.push_back({require_string(x, "requirement"),
                                  x.contains("evidence") && x["evidence"].is_string()
                                      ? x["evidence"].get<std::string>()
                                      : std::string()});
        }
      }
      if (r.faithful && !r.violations.empty()) {
        throw InvariantError("a faithful verdict cannot list violations");
      }
      if (!r.faithful && r.violations.empty()) {
        throw InvariantError("an unfaithful verdict must list violations");
      }
      return r;
    });
    for (const auto& x : reply.violations) v.violations.push_back(x);
  } catch (const llm::SchemaError& e) {
    v.backend_failure = true;
    v.violations.push_back({"inspector verdict", std::string("unusable reply: ") + e.what()});
  }
  v.faithful = v.violations.empty();
  return v;
}

cells::CellScript insert_module_cells(cells::CellScript script,
                                      const std::vector<store::ModuleRecord>& modules) {
  const std::regex re(script.delimiter_pattern);
  std::vector<cells::Cell> added;
  for (const auto& m : modules) {
    const std::string name = "module:" + m.id;
    if (script.find_cell(name) >= 0) continue;
    cells::Cell c;
    c.name = name;
    c.header = "# %% " + name;
    if (!std::regex_search(c.header, re)) {
      throw StageError("modules", "module cell header does not match the delimiter pattern");
    }
    c.lines = source_lines(m.source_text);
    added.push_back(std::move(c));
  }
  script.cells.insert(script.cells.begin(), added.begin(), added.end());
  return script;
}

Directive strategy_directive(const policy::StrategyReport& strategy) {
  Directive d;
  d.text = "Realise this action: representation=" + strategy.action.rep +
           ", constraint=" + strategy.action.constraint + ", optimizer=" + strategy.action.opt +
           ".\n" + strategy.narrative;
  if (!trim(strategy.training_plan).empty()) d.text += "\nTraining plan: " + strategy.training_plan;
  return d;
}

CodeState implement(const ImplementInput& input, llm::Backend& backend, const Prompts& prompts) {
  if (!input.strategy) throw InvariantError("implement needs a strategy");
  const auto& strategy = *input.strategy;
  if (input.max_inspections < 1) throw InvariantError("max_inspections must be at least 1");
  CodeState state;
  const bool fresh = !input.prior_source || !input.prior_action ||
                     strategy.action.structurally_differs(*input.prior_action);
  state.fresh = fresh;
  try {
    state.script = cells::parse_cells(fresh ? input.template_source : *input.prior_source,
                                      input.delimiter_pattern);
  } catch (const InvariantError& e) {
    throw StageError("parse", e.what());
  }
  state.notes.push_back(fresh ? "assembled from template" : "patched prior script");
  state.script = insert_module_cells(std::move(state.script), input.modules);

  Directive directive = strategy_directive(strategy);
  while (true) {
    const CellPlan plan = plan_or_stage_error(directive, state.script, backend, prompts, input.max_targets);
    for (const auto& r : plan.repairs) state.notes.push_back("plan repair: " + r);
    apply_plan(state, plan, backend, prompts);
    const InspectionVerdict verdict = inspect(state.script, strategy, backend, prompts.inspector);
    ++state.inspections;
    if (verdict.faithful) break;
    if (state.inspections >= input.max_inspections) {
      state.unfaithful = true;
      state.notes.push_back("inspection cap reached; forwarding unfaithful code");
      break;
    }
    directive = Directive{};
    directive.text = "The inspector found these violations of the strategy; fix them:\n";
    for (const auto& v : verdict.violations) {
      directive.text += "- " + v.requirement + ": " + v.evidence + "\n";
    }
  }
  render_into(state);
  return state;
}

CodeState repair(const CodeState& state, const Directive& directive, llm::Backend& backend,
                 const Prompts& prompts, int max_targets) {
  CodeState next = state;
  next.patches.clear();
  next.notes.clear();
  const CellPlan plan = plan_or_stage_error(directive, next.script, backend, prompts, max_targets);
  for (const auto& r : plan.repairs) next.notes.push_back("plan repair: " + r);
  apply_plan(next, plan, backend, prompts);
  render_into(next);
  return next;
}

}  // namespace sciloop::impl
