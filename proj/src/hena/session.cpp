#include <algorithm>
#include <filesystem>
#include <set>

#include "sciloop/hena.hpp"

namespace fs = std::filesystem;

namespace sciloop::hena {

namespace {

const std::set<std::string>& gate_ids() {
  static const std::set<std::string> ids{"pre_strategy_commit", "post_advisor", "clarification",
                                         "abort"};
  return ids;
}

bool is_image(const std::string& path) {
  const std::string ext = to_lower(fs::path(path).extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".gif" || ext == ".svg";
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

Json metrics_json(const std::map<std::string, double>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

Json reward_json(const bandit::RewardBreakdown& r) {
  return Json{{"integrity", r.integrity()},
              {"accuracy", r.accuracy()},
              {"precision_sub", r.precision_sub()},
              {"consistency_sub", r.consistency_sub()},
              {"details", r.details()},
              {"optimality", r.optimality()},
              {"total", bandit::reward_total(r)}};
}

}  // namespace

std::string StopDecision::label() const {
  switch (kind) {
    case Kind::continue_loop: return "continue";
    case Kind::succeeded: return "succeeded";
    case Kind::exhausted: return "exhausted";
    case Kind::revert: return "revert_to:" + std::to_string(revert_iteration);
  }
  return "continue";
}

StopDecision stop_check(const bandit::TrialRecord& last, int step_iterations,
                        const SessionConfig& config) {
  StopDecision d;
  const double total = bandit::reward_total(last.reward);
  const Verdict v = last.diagnosis.verdict;
  if (v == Verdict::stop_success && total >= config.reward_stop_threshold) {
    d.kind = StopDecision::Kind::succeeded;
    d.reason = "reward at or above threshold with a stop_success verdict";
  } else if (v == Verdict::stop_exhausted) {
    d.kind = StopDecision::Kind::exhausted;
    d.reason = "diagnosis declared the search exhausted";
  } else if (step_iterations >= config.max_iterations) {
    d.kind = StopDecision::Kind::exhausted;
    d.reason = "iteration cap reached";
  } else if (v == Verdict::revert_to && last.diagnosis.revert_iteration) {
    d.kind = StopDecision::Kind::revert;
    d.revert_iteration = *last.diagnosis.revert_iteration;
    d.reason = "diagnosis asked to revert";
  } else {
    d.reason = v == Verdict::stop_success ? "stop_success below the reward threshold" : "continue";
  }
  return d;
}

Json Ack::to_json() const {
  return Json{{"disposition", disposition}, {"gate", gate}, {"directive", directive}};
}

Json SessionState::to_json() const {
  Json records = Json::array();
  for (const auto& r : history.records()) records.push_back(explog::record_to_json(r, session_id));
  return Json{{"session_id", session_id},
              {"project", project},
              {"status", to_string(status)},
              {"problem", problem.to_json()},
              {"routing", routing.to_json()},
              {"history", records}};
}

SessionState fold_events(const std::vector<events::Event>& evs) {
  SessionState s;
  for (const auto& e : evs) {
    if (s.session_id.empty()) {
      s.session_id = e.session_id;
      s.history = bandit::TrialHistory(e.session_id);
    }
    const Json& p = e.payload;
    if (e.kind == "session_started") {
      s.project = require_string(p, "project");
      s.problem = concept_team::FormalProblem::from_json(p.at("problem"));
      s.routing = concept_team::RoutingDecision::from_json(p.at("routing"));
      s.status = Status::running;
    } else if (e.kind == "step_started") {
      const int step = require_int(p, "step");
      if (step < 1 || step > static_cast<int>(s.routing.steps.size())) {
        throw InvariantError("step_started names an unknown step");
      }
      s.routing.steps[static_cast<std::size_t>(step - 1)].problem =
          concept_team::FormalProblem::from_json(p.at("problem"));
    } else if (e.kind == "gate_waiting") {
      s.status = Status::waiting_intervention;
    } else if (e.kind == "gate_resolved") {
      s.status = Status::running;
    } else if (e.kind == "trial_registered") {
      s.history.append(explog::record_from_json(p.at("record")));
    } else if (e.kind == "terminal") {
      s.status = status_from_string(require_string(p, "status"));
    }
  }
  return s;
}

struct Session::Prompts {
  std::string strategist, critic, advisor, advisor_parser, planner, planner_parser, patcher,
      inspector, debugger, validator, librarian;
};

struct Session::StepRun {
  std::size_t index = 0;
  concept_team::RoutingStep* step = nullptr;
  int iterations = 0;
  std::optional<int> base_iteration;
  std::optional<StructuredDiagnosis> last_diagnosis;
  std::optional<store::TemplateRecord> template_record;
  Status outcome = Status::running;
  int final_iteration = 0;
};

Session::Session(SessionConfig config, std::string request, llm::Backend& backend, Clock& clock,
                 std::string session_id)
    : config_(std::move(config)), request_(std::move(request)), backend_(backend), clock_(clock) {
  config_.validate();
  id_ = session_id.empty() ? derive_session_id(request_, config_) : std::move(session_id);
  root_abs_ = fs::absolute(config_.runtime.workdir_root).lexically_normal().string();
  const fs::path dir = fs::path(config_.log_dir) / id_;
  fs::create_directories(dir);
  trials_path_ = (dir / "trials.jsonl").string();
  events_path_ = (dir / "events.jsonl").string();
  fs::remove(trials_path_);
  events_ = std::make_unique<events::EventLog>(id_, events_path_, clock_);
  trial_log_ = std::make_unique<explog::TrialLog>(trials_path_, id_);
  state_.session_id = id_;
  state_.history = bandit::TrialHistory(id_);
}

Session::~Session() = default;

SessionState Session::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return state_;
}

std::string Session::project_dir() const {
  std::lock_guard<std::mutex> lock(mu_);
  if (state_.project.empty()) return {};
  return (fs::path(root_abs_) / state_.project).string();
}

std::optional<std::string> Session::waiting_gate() const {
  std::lock_guard<std::mutex> lock(mu_);
  return waiting_gate_;
}

void Session::set_status(Status s) {
  std::lock_guard<std::mutex> lock(mu_);
  state_.status = s;
}

void Session::check_abort() {
  std::lock_guard<std::mutex> lock(mu_);
  if (abort_requested_) throw AbortedError();
}

std::string Session::relative_to_root(const std::string& absolute) const {
  return fs::path(absolute).lexically_relative(root_abs_).generic_string();
}

Ack Session::intervene(const Intervention& iv) {
  if (!gate_ids().count(iv.gate)) throw GateError(400, "unknown gate '" + iv.gate + "'");
  std::lock_guard<std::mutex> lock(mu_);
  if (is_terminal(state_.status)) throw GateError(409, "session already finished");
  if (iv.gate == "abort") {
    abort_requested_ = true;
    gate_cv_.notify_all();
    return {"aborting", iv.gate, iv.directive};
  }
  if (config_.mode == Mode::interactive && waiting_gate_) {
    if (*waiting_gate_ != iv.gate) {
      throw GateError(409, "session is waiting at " + *waiting_gate_ + ", not " + iv.gate);
    }
    if (gate_answer_) throw GateError(409, "gate " + iv.gate + " already resolved");
    gate_answer_ = iv.directive;
    gate_cv_.notify_all();
    return {"resolved", iv.gate, iv.directive};
  }
  if (trim(iv.directive).empty()) {
    if (config_.mode == Mode::interactive) throw GateError(409, "no gate is waiting for approval");
    return {"approved", iv.gate, iv.directive};
  }
  queued_directives_.push_back(trim(iv.directive));
  return {"queued", iv.gate, trim(iv.directive)};
}

std::string Session::gate(const std::string& gate_id, const Json& payload) {
  check_abort();
  if (config_.mode == Mode::autonomous) return {};
  {
    std::lock_guard<std::mutex> lock(mu_);
    waiting_gate_ = gate_id;
    gate_answer_.reset();
    state_.status = Status::waiting_intervention;
  }
  events_->append("gate_waiting", Json{{"gate", gate_id}, {"payload", payload}});
  std::unique_lock<std::mutex> lock(mu_);
  const auto timeout = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::duration<double>(config_.gate_timeout_seconds));
  const bool answered =
      gate_cv_.wait_for(lock, timeout, [&] { return gate_answer_.has_value() || abort_requested_; });
  const bool aborted = abort_requested_;
  std::string directive = answered && gate_answer_ ? trim(*gate_answer_) : std::string();
  waiting_gate_.reset();
  gate_answer_.reset();
  state_.status = Status::running;
  lock.unlock();
  events_->append("gate_resolved", Json{{"gate", gate_id},
                                        {"directive", directive},
                                        {"auto_approved", !answered},
                                        {"aborted", aborted}});
  if (aborted) throw AbortedError();
  return directive;
}

std::vector<std::string> Session::take_directives() {
  std::lock_guard<std::mutex> lock(mu_);
  while (!queued_directives_.empty()) {
    directives_.push_back(queued_directives_.front());
    queued_directives_.pop_front();
  }
  return directives_;
}

const Session::Prompts& Session::prompts_for(const std::string& group) {
  auto it = prompts_.find(group);
  if (it != prompts_.end()) return *it->second;
  scaffolding::PromptOptions plain;
  plain.budget_tokens = config_.context_budget_tokens;
  scaffolding::PromptOptions with_space = plain;
  with_space.action_space = config_.action_space;
  auto compose = [&](const char* role, const scaffolding::PromptOptions& o) {
    return scaffolding::compose_system_prompt(role, group, *registry_, o).system_prompt;
  };
  auto p = std::make_unique<Prompts>();
  p->strategist = compose("strategist", with_space);
  p->critic = compose("critic", with_space);
  p->advisor = compose("advisor", plain);
  p->advisor_parser = compose("advisor_parser", plain);
  p->planner = compose("planner", plain);
  p->planner_parser = compose("planner_parser", plain);
  p->patcher = compose("patcher", plain);
  p->inspector = compose("inspector", plain);
  p->debugger = compose("debugger", plain);
  p->validator = compose("validator", plain);
  p->librarian = compose("librarian", plain);
  return *prompts_.emplace(group, std::move(p)).first->second;
}

void Session::register_record(bandit::TrialRecord record) {
  trial_log_->append(record);
  {
    std::lock_guard<std::mutex> lock(mu_);
    state_.history.append(record);
  }
  events_->append("trial_registered", Json{{"record", explog::record_to_json(record, id_)}});
}

void Session::finish(Status s, const std::string& reason) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    state_.status = s;
    waiting_gate_.reset();
  }
  const Json payload{{"status", to_string(s)}, {"reason", reason}};
  try {
    write_file_atomic((fs::path(config_.log_dir) / id_ / "status.json").string(),
                      Json{{"session_id", id_}, {"status", to_string(s)}, {"reason", reason}}.dump(2) + "\n");
  } catch (const std::exception&) {
    // The event stream still carries the terminal status.
  }
  events_->append("terminal", payload);
}

void Session::start() {
  registry_ = std::make_unique<scaffolding::BlueprintRegistry>(
      scaffolding::load_blueprints(config_.blueprint_dir));
  store_ = std::make_unique<store::CodeStore>(config_.store_dir);
  store_->set_embedder(&backend_);
  for (const auto& t : config_.seed_templates) {
    const std::string source = read_file(t.path);
    const int lines = static_cast<int>(store::split_keep_newlines(source).size());
    store_->put_template(source, t.metadata, store::window_partition(lines));
  }
  for (const auto& m : config_.seed_modules) {
    store_->put_module({m.id, m.description, read_file(m.path), m.dependencies,
                        store::Provenance::library});
  }

  scaffolding::PromptOptions plain;
  plain.budget_tokens = config_.context_budget_tokens;
  auto general = [&](const char* role) {
    return scaffolding::compose_system_prompt(role, "general", *registry_, plain).system_prompt;
  };
  concept_team::FormalProblem problem =
      concept_team::formalize_request(request_, backend_, general("coordinator"));
  if (problem.ill_posed) {
    const std::string answer = gate("clarification", Json{{"questions", problem.clarifications}});
    if (!answer.empty()) {
      problem.assumptions.push_back("user clarification: " + answer);
    } else {
      for (const auto& q : problem.clarifications) {
        problem.assumptions.push_back("proceeding with a standard choice for: " + q);
      }
    }
  }
  concept_team::RoutingDecision routing =
      concept_team::route(problem, backend_, general("gatekeeper"));
  fs::create_directories(root_abs_);
  const std::string project =
      sandbox::assign_project_name(problem, root_abs_, backend_, general("filing"));
  {
    std::lock_guard<std::mutex> lock(mu_);
    state_.problem = problem;
    state_.routing = routing;
    state_.project = project;
    state_.status = Status::running;
  }
  events_->append("session_started", Json{{"project", project},
                                          {"problem", problem.to_json()},
                                          {"routing", routing.to_json()}});
}

SessionState Session::run() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (started_) throw InvariantError("session already ran");
    started_ = true;
  }
  try {
    start();
    const std::size_t steps = snapshot().routing.steps.size();
    Status outcome = Status::succeeded;
    std::string reason = "all routing steps succeeded";
    for (std::size_t i = 0; i < steps; ++i) {
      concept_team::RoutingStep step;
      {
        std::lock_guard<std::mutex> lock(mu_);
        step = state_.routing.steps[i];
      }
      StepRun run;
      run.index = i;
      run.step = &step;
      if (step.group == "storage") {
        events_->append("step_started", Json{{"step", i + 1},
                                             {"group", step.group},
                                             {"problem", step.problem.to_json()},
                                             {"note", "storage steps run no iterations"}});
        continue;
      }
      events_->append("step_started", Json{{"step", i + 1},
                                           {"group", step.group},
                                           {"problem", step.problem.to_json()}});
      while (run_iteration(run)) {
      }
      if (run.outcome != Status::succeeded) {
        outcome = Status::exhausted;
        reason = "routing step " + std::to_string(i + 1) + " (" + step.group + ") exhausted";
        break;
      }
      const std::string source = sources_.count(run.final_iteration)
                                     ? sources_.at(run.final_iteration)
                                     : std::string();
      // Deposit; failures here do not change the session outcome.
      if (!source.empty()) {
        try {
          scaffolding::PromptOptions plain;
          plain.budget_tokens = config_.context_budget_tokens;
          const auto analyzer = scaffolding::compose_system_prompt("analyzer", "storage", *registry_, plain);
          const auto splitter = scaffolding::compose_system_prompt("splitter", "storage", *registry_, plain);
          store::Metadata base{{"domain_group", step.group}, {"title", step.problem.title}};
          store::deposit_validated(source, base, true, *store_, &backend_, analyzer.system_prompt,
                                   splitter.system_prompt);
        } catch (const llm::MissingFixtureError&) {
          throw;
        } catch (const Error&) {
        }
      }
      // Thread the produced data into the next step.
      if (i + 1 < steps) {
        const bandit::TrialRecord rec = snapshot().history.at_iteration(run.final_iteration);
        std::lock_guard<std::mutex> lock(mu_);
        auto& next = state_.routing.steps[i + 1];
        std::optional<std::string> chosen;
        for (const auto& want : next.consumes) {
          for (const auto& a : rec.observation.artifact_paths) {
            if (fs::path(a).filename().string() == fs::path(want).filename().string()) {
              chosen = a;
              break;
            }
          }
          if (chosen) break;
        }
        if (!chosen) {
          for (const auto& a : rec.observation.artifact_paths) {
            if (!is_image(a)) {
              chosen = a;
              break;
            }
          }
        }
        if (chosen) {
          next.problem.reference_data = concept_team::ReferenceData{
              *chosen, "produced by routing step " + std::to_string(i + 1) +
                           "; path relative to the workdir root ($SCILOOP_WORKDIR_ROOT)"};
        }
      }
    }
    finish(outcome, reason);
  } catch (const AbortedError&) {
    finish(Status::aborted, "aborted by intervention");
  } catch (const llm::MissingFixtureError& e) {
    finish(Status::aborted, std::string("transcript exhausted: ") + e.what());
  } catch (const concept_team::EscalationError& e) {
    finish(Status::aborted, std::string("escalated for human review: ") + e.what());
  } catch (const std::exception& e) {
    finish(Status::aborted, std::string("unrecoverable error: ") + e.what());
  }
  return snapshot();
}

bool Session::run_iteration(StepRun& run) {
  check_abort();
  const auto& step = *run.step;
  const Prompts& pr = prompts_for(step.group);
  bandit::TrialHistory history = snapshot().history;
  const int n = history.next_iteration();

  bandit::TrialRecord rec;
  rec.iteration = n;
  rec.step = static_cast<int>(run.index) + 1;
  rec.started_ms = clock_.now_ms();
  rec.action.rep = rec.action.constraint = rec.action.opt = "unset";
  rec.action.iteration = n;

  std::vector<std::string> directives = take_directives();
  rec.extras["directives"] = Json(directives).dump();

  policy::PolicyContext ctx;
  ctx.strategist_prompt = pr.strategist;
  ctx.critic_prompt = pr.critic;
  ctx.problem_text = step.problem.describe();
  ctx.history_summary = scaffolding::summarize_history(
      history, &backend_, {config_.history_budget_tokens, config_.recent_records_verbatim});
  ctx.prior_diagnosis = run.last_diagnosis;
  ctx.directives = directives;
  ctx.space = config_.action_space;
  ctx.iteration = n;

  auto on_round = [&, round = 0](const policy::StrategyRound& r) mutable {
    ++round;
    events_->append("strategy_proposed",
                    Json{{"iteration", n}, {"round", round}, {"report", r.report.to_json()}});
    events_->append("critique",
                    Json{{"iteration", n}, {"round", round}, {"critique", r.critique.to_json()}});
  };

  StructuredDiagnosis diagnosis;
  bool have_record_body = false;
  try {
    policy::StrategyOutcome strategy =
        policy::strategy_loop(ctx, backend_, config_.strategy_max_rounds, on_round);
    while (true) {
      const std::string edit = gate("pre_strategy_commit",
                                    Json{{"iteration", n}, {"report", strategy.report.to_json()}});
      if (edit.empty()) break;
      {
        std::lock_guard<std::mutex> lock(mu_);
        directives_.push_back(edit);
        ctx.directives = directives_;
      }
      rec.extras["directives"] = Json(ctx.directives).dump();
      strategy = policy::strategy_loop(ctx, backend_, config_.strategy_max_rounds, on_round);
    }
    const policy::StrategyReport& report = strategy.report;
    rec.action = report.action;
    rec.action.iteration = n;
    rec.action.free_text_plan = report.narrative;
    if (report.force_accepted) rec.extras["force_accepted"] = "true";
    check_abort();

    // Template: retrieved and validated once per step.
    if (!run.template_record) {
      const std::string query = step.problem.title + " " + step.problem.pde_or_task + " " +
                                step.problem.method_hint + " " + step.group;
      store::RetrievalResult found;
      try {
        found = store::retrieve_template(query, *store_, {{"domain_group", step.group}},
                                         config_.similarity_floor);
      } catch (const store::NoTemplateError& e) {
        throw impl::StageError("retrieval", e.what());
      }
      std::string rejections;
      for (const auto& hit : found.candidates) {
        if (hit.score < config_.similarity_floor) break;
        store::TemplateRecord candidate = store_->get_template(hit.template_id);
        const auto verdict =
            store::validate_template(candidate, step.problem, &backend_, pr.validator);
        if (verdict.accepted) {
          run.template_record = std::move(candidate);
          break;
        }
        rejections += " " + hit.template_id.substr(0, 12) + ": " + verdict.rationale + ";";
      }
      if (!run.template_record) {
        throw impl::StageError("retrieval", "every candidate template was rejected:" + rejections);
      }
    }
    rec.extras["template_id"] = run.template_record->id;

    // Modules, generating what the store lacks.
    if (static_cast<int>(report.required_modules.size()) > config_.max_required_modules) {
      throw impl::StageError("modules", "strategy requires more modules than allowed");
    }
    store::CollectedModules modules;
    if (!report.required_modules.empty()) {
      modules = store::collect_modules(report.required_modules, *store_);
    }
    for (int pass = 0; !modules.missing.empty(); ++pass) {
      if (pass >= config_.max_required_modules) {
        throw impl::StageError("modules", "module dependencies did not resolve");
      }
      for (const auto& name : modules.missing) {
        store::generate_missing_module(name, report.narrative, run.template_record->source_text,
                                       *store_, backend_, pr.librarian, config_.syntax_check);
      }
      modules = store::collect_modules(report.required_modules, *store_);
    }

    // Implementation.
    impl::Prompts ip{pr.planner, pr.planner_parser, pr.patcher, pr.inspector};
    impl::ImplementInput input;
    input.strategy = &report;
    input.template_source = run.template_record->source_text;
    input.modules = modules.found;
    if (run.base_iteration && sources_.count(*run.base_iteration)) {
      input.prior_source = sources_.at(*run.base_iteration);
      input.prior_action = history.at_iteration(*run.base_iteration).action;
    }
    input.delimiter_pattern = config_.delimiter_pattern;
    input.max_inspections = config_.max_inspections;
    input.max_targets = config_.max_patch_targets;
    impl::CodeState code = impl::implement(input, backend_, ip);
    if (code.unfaithful) rec.extras["unfaithful"] = "true";
    rec.extras["inspections"] = std::to_string(code.inspections);

    const std::string project_abs = project_dir();
    auto run_version = [&](const impl::CodeState& cs) {
      check_abort();
      const sandbox::VersionDir vd = sandbox::next_version(project_abs);
      const std::string script_rel = relative_to_root(vd.path + "/" + config_.runtime.script_name);
      events_->append("code_state", Json{{"iteration", n},
                                         {"version", vd.name},
                                         {"path", script_rel},
                                         {"sha256", cs.sha256},
                                         {"fresh", cs.fresh},
                                         {"unfaithful", cs.unfaithful},
                                         {"patches", cs.patches.size()},
                                         {"notes", cs.notes}});
      ExecutionOutcome out = sandbox::execute(cs.source, vd.path, config_.runtime);
      Json ev{{"iteration", n},
              {"version", vd.name},
              {"exit_code", out.exit_code},
              {"timed_out", out.timed_out},
              {"metrics", metrics_json(out.metrics)}};
      if (!config_.deterministic) ev["duration_seconds"] = out.duration_seconds;
      if (!out.metrics_error.empty()) ev["metrics_error"] = out.metrics_error;
      events_->append("execution", ev);
      rec.code_state = {script_rel, cs.sha256};
      rec.extras["version"] = vd.name;
      return out;
    };

    ExecutionOutcome outcome = run_version(code);
    int debug_rounds = 0;
    while ((outcome.exit_code != 0 || outcome.timed_out) && debug_rounds < config_.max_debug_rounds) {
      ++debug_rounds;
      const sandbox::DebugReport dr = sandbox::debug_report(outcome, code.script, backend_,
                                                            pr.debugger, config_.runtime.script_name);
      events_->append("debug_round", Json{{"iteration", n}, {"round", debug_rounds}, {"report", dr.to_json()}});
      code = impl::repair(code, impl::Directive{dr.fix_directive, dr.suspect_cells}, backend_, ip,
                          config_.max_patch_targets);
      outcome = run_version(code);
    }
    rec.extras["debug_rounds"] = std::to_string(debug_rounds);
    if (!outcome.metrics_error.empty()) rec.extras["metrics_error"] = outcome.metrics_error;
    sources_[n] = code.source;

    std::vector<std::string> patterns = config_.runtime.artifact_patterns;
    for (const auto& p : config_.scoring.required_artifacts) patterns.push_back(p);
    const ArtifactManifest manifest =
        sandbox::collect_artifacts(outcome.workdir, patterns, config_.scoring.required_artifacts);

    rec.observation.exit_code = outcome.exit_code;
    rec.observation.log_excerpt = replace_all(sandbox::log_excerpt(outcome, 2000), root_abs_, "<workdir>");
    rec.observation.metrics = outcome.metrics;
    std::vector<std::string> images;
    for (const auto& e : manifest.entries) {
      rec.observation.artifact_paths.push_back(relative_to_root(e.path));
      if (is_image(e.path)) images.push_back(e.path);
    }

    const bool crashed = outcome.exit_code != 0 || outcome.timed_out;
    if (crashed) {
      diagnosis = policy::rule_based_diagnosis(rec.observation, config_.scoring);
      diagnosis.extras["debug_cap"] = "exhausted";
    } else {
      policy::AdvisorInput ai{rec.observation, images, ctx.history_summary, ctx.problem_text, pr.advisor};
      const policy::AdvisorReport advice = policy::advise(ai, report, backend_, config_.scoring);
      events_->append("advisor_report", Json{{"iteration", n},
                                             {"text", advice.text},
                                             {"degraded", advice.degraded},
                                             {"images", advice.attached_images.size()}});
      if (advice.degraded) {
        diagnosis = policy::rule_based_diagnosis(rec.observation, config_.scoring);
      } else {
        try {
          diagnosis = policy::parse_advisor(advice.text, backend_, pr.advisor_parser, n);
        } catch (const llm::SchemaError& e) {
          diagnosis = policy::rule_based_diagnosis(rec.observation, config_.scoring);
          diagnosis.extras["parse_failure"] = e.raw_text();
        }
      }
    }
    const double integrity = reward::score_integrity(outcome, manifest, config_.scoring);
    const reward::AccuracyScore acc =
        reward::score_accuracy(rec.observation.metrics, diagnosis.grades, config_.scoring);
    rec.reward = reward::compose_reward(integrity, acc, diagnosis.grades);
    have_record_body = true;
  } catch (const AbortedError&) {
    throw;
  } catch (const llm::MissingFixtureError&) {
    throw;
  } catch (const Error& e) {
    if (have_record_body) throw;
    rec.observation = bandit::Observation{};
    rec.observation.exit_code = -1;
    rec.reward = bandit::RewardBreakdown::make(0, 0, 0, 0, 0, 0);
    diagnosis = StructuredDiagnosis{};
    diagnosis.failure_modes.push_back(std::string("stage error: ") + e.what());
    diagnosis.grades = AdvisorGrades::make(0, 0, 0, "stage error");
    rec.extras["error"] = e.what();
  }
  rec.diagnosis = diagnosis;
  events_->append("reward", Json{{"iteration", n}, {"breakdown", reward_json(rec.reward)}});

  const StopDecision stop = stop_check(rec, run.iterations + 1, config_);
  rec.extras["stop_decision"] = stop.label();
  rec.ended_ms = clock_.now_ms();
  register_record(rec);
  ++run.iterations;
  run.final_iteration = n;
  run.last_diagnosis = diagnosis;

  switch (stop.kind) {
    case StopDecision::Kind::succeeded:
      run.outcome = Status::succeeded;
      return false;
    case StopDecision::Kind::exhausted:
      run.outcome = Status::exhausted;
      return false;
    case StopDecision::Kind::revert:
      run.base_iteration = stop.revert_iteration;
      break;
    case StopDecision::Kind::continue_loop:
      if (sources_.count(n)) run.base_iteration = n;
      break;
  }
  const std::string directive = gate(
      "post_advisor", Json{{"iteration", n},
                           {"reward", bandit::reward_total(rec.reward)},
                           {"diagnosis", policy::diagnosis_to_json(diagnosis)}});
  if (!directive.empty()) {
    std::lock_guard<std::mutex> lock(mu_);
    queued_directives_.push_back(directive);
  }
  return true;
}

}  // namespace sciloop::hena
