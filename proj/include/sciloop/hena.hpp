#pragma once

// Session driver: formalize -> route -> per step iteration loop (strategy,
// implementation, execution, debugging, advice, reward, registration) with
// intervention gates, stop criteria and deposit of successful code.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sciloop/bandit.hpp"
#include "sciloop/code_store.hpp"
#include "sciloop/conceptualization.hpp"
#include "sciloop/events.hpp"
#include "sciloop/experiment_log.hpp"
#include "sciloop/http_backend.hpp"
#include "sciloop/implementation.hpp"
#include "sciloop/policy.hpp"
#include "sciloop/reward.hpp"
#include "sciloop/sandbox.hpp"
#include "sciloop/scaffolding.hpp"

namespace sciloop::hena {

enum class Mode { autonomous, interactive };
std::string to_string(Mode m);

enum class Status { running, waiting_intervention, succeeded, exhausted, aborted };
std::string to_string(Status s);
Status status_from_string(const std::string& s);
bool is_terminal(Status s);

struct SeedTemplate {
  std::string path;
  store::Metadata metadata;
};

struct SeedModule {
  std::string id;
  std::string path;
  std::string description;
  std::vector<std::string> dependencies;
};

/// Default rep x constraint x opt identifiers.
bandit::ActionSpace default_action_space();

/// Directory holding the shipped blueprints.
std::string default_blueprint_dir();

struct SessionConfig {
  Mode mode = Mode::autonomous;
  int max_iterations = 15;  // per routing step
  int max_debug_rounds = 5;
  double reward_stop_threshold = 90.0;
  int strategy_max_rounds = 3;
  int max_inspections = 2;
  int max_patch_targets = 8;
  int max_required_modules = 8;
  bandit::ActionSpace action_space = default_action_space();
  reward::ScoringConfig scoring;
  sandbox::RuntimeConfig runtime;
  std::optional<llm::BackendTable> backends;
  Json backends_json;  // as given, for round trips
  std::string blueprint_dir = default_blueprint_dir();
  std::string store_dir = "store";
  std::string log_dir = "logs";
  std::size_t context_budget_tokens = 8000;
  std::size_t history_budget_tokens = 2000;
  std::size_t recent_records_verbatim = 5;
  double gate_timeout_seconds = 86400.0;
  double similarity_floor = 0.35;
  std::vector<SeedTemplate> seed_templates;
  std::vector<SeedModule> seed_modules;
  std::string delimiter_pattern = cells::kDefaultDelimiter;
  store::SyntaxCheck syntax_check;
  bool deterministic = false;  // logical clock, no wall-clock durations in events
  double r_star = bandit::kMaxReward;

  /// Throws InvariantError naming the offending key.
  void validate() const;
  /// Unknown keys raise InvariantError naming the key. Relative paths are
  /// resolved against `base_dir` when it is non-empty.
  static SessionConfig from_json(const Json& j, const std::string& base_dir = {});
  Json to_json() const;
};

/// Overlays `overrides` onto `base` key by key (objects merge recursively).
Json merge_config(Json base, const Json& overrides);

struct SessionState {
  std::string session_id;
  std::string project;
  concept_team::FormalProblem problem;
  concept_team::RoutingDecision routing;
  bandit::TrialHistory history;
  Status status = Status::running;
  Json to_json() const;
  bool operator==(const SessionState&) const = default;
};

/// Rebuilds the session state from its event stream.
SessionState fold_events(const std::vector<events::Event>& events);

struct StopDecision {
  enum class Kind { continue_loop, succeeded, exhausted, revert } kind = Kind::continue_loop;
  int revert_iteration = 0;
  std::string reason;
  std::string label() const;
};

/// Decision after `last`, the newest record; `step_iterations` counts the
/// records of the current routing step including `last`.
StopDecision stop_check(const bandit::TrialRecord& last, int step_iterations,
                        const SessionConfig& config);

/// Upper bound on chat completions for a session over `steps` routing steps.
long long call_budget_bound(const SessionConfig& config, int steps);

struct Intervention {
  std::string gate;       // pre_strategy_commit | post_advisor | clarification | abort
  std::string directive;  // empty approves
};

class GateError : public Error {
 public:
  GateError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct Ack {
  std::string disposition;  // resolved | queued | aborting
  std::string gate;
  std::string directive;
  Json to_json() const;
};

/// Session id derived from the request and the configuration.
std::string derive_session_id(const std::string& request, const SessionConfig& config);

class Session {
 public:
  /// Backend and clock must outlive the session. An empty id is derived.
  Session(SessionConfig config, std::string request, llm::Backend& backend, Clock& clock,
          std::string session_id = {});
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Runs to a terminal status. Call once.
  SessionState run();

  /// Thread-safe. Throws GateError(409) on a gate mismatch.
  Ack intervene(const Intervention& intervention);

  SessionState snapshot() const;
  const std::string& id() const { return id_; }
  events::EventLog& event_log() { return *events_; }
  const std::string& trials_path() const { return trials_path_; }
  const std::string& events_path() const { return events_path_; }
  /// Absolute project directory, empty before the filing call.
  std::string project_dir() const;
  const SessionConfig& config() const { return config_; }
  std::optional<std::string> waiting_gate() const;

 private:
  struct StepRun;
  struct Prompts;

  void start();
  void run_step(std::size_t index, concept_team::RoutingStep& step);
  bool run_iteration(StepRun& run);
  void register_record(bandit::TrialRecord record);
  /// Blocks in interactive mode. Returns the directive (empty on approval).
  std::string gate(const std::string& gate_id, const Json& payload);
  void check_abort();
  std::vector<std::string> take_directives();
  std::string relative_to_root(const std::string& absolute) const;
  const Prompts& prompts_for(const std::string& group);
  void set_status(Status s);
  void finish(Status s, const std::string& reason);

  SessionConfig config_;
  std::string request_;
  llm::Backend& backend_;
  Clock& clock_;
  std::string id_;
  std::string trials_path_;
  std::string events_path_;
  std::unique_ptr<events::EventLog> events_;
  std::unique_ptr<explog::TrialLog> trial_log_;
  std::unique_ptr<store::CodeStore> store_;
  std::unique_ptr<scaffolding::BlueprintRegistry> registry_;
  std::map<std::string, std::unique_ptr<Prompts>> prompts_;
  std::string root_abs_;

  mutable std::mutex mu_;
  std::condition_variable gate_cv_;
  SessionState state_;
  std::optional<std::string> waiting_gate_;
  std::optional<std::string> gate_answer_;
  std::deque<std::string> queued_directives_;
  std::vector<std::string> directives_;  // cumulative, binding
  bool abort_requested_ = false;
  bool started_ = false;
  std::map<int, std::string> sources_;  // iteration -> code state source
};

/// The session was aborted; used to unwind the loop.
class AbortedError : public Error {
 public:
  AbortedError() : Error("session aborted") {}
};

}  // namespace sciloop::hena
