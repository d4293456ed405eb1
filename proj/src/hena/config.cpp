#include <cstdlib>
#include <filesystem>
#include <set>

#include "sciloop/hena.hpp"

#ifndef SCILOOP_DEFAULT_ASSET_DIR
#define SCILOOP_DEFAULT_ASSET_DIR "assets"
#endif

namespace fs = std::filesystem;

namespace sciloop::hena {

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& prefix) {
  if (!j.is_object()) throw InvariantError("config section '" + prefix + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) {
      throw InvariantError("unknown config key '" + (prefix.empty() ? k : prefix + "." + k) + "'");
    }
  }
}

store::Metadata metadata_from(const Json& j, const std::string& where) {
  store::Metadata m;
  if (j.is_null()) return m;
  if (!j.is_object()) throw InvariantError("config key '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw InvariantError("config key '" + where + "." + k + "' must be a string");
    m[k] = v.get<std::string>();
  }
  return m;
}

}  // namespace

std::string to_string(Mode m) { return m == Mode::autonomous ? "autonomous" : "interactive"; }

std::string to_string(Status s) {
  switch (s) {
    case Status::running: return "running";
    case Status::waiting_intervention: return "waiting_intervention";
    case Status::succeeded: return "succeeded";
    case Status::exhausted: return "exhausted";
    case Status::aborted: return "aborted";
  }
  return "running";
}

Status status_from_string(const std::string& s) {
  for (Status v : {Status::running, Status::waiting_intervention, Status::succeeded,
                   Status::exhausted, Status::aborted}) {
    if (to_string(v) == s) return v;
  }
  throw InvariantError("unknown session status '" + s + "'");
}

bool is_terminal(Status s) {
  return s == Status::succeeded || s == Status::exhausted || s == Status::aborted;
}

bandit::ActionSpace default_action_space() {
  return bandit::ActionSpace(
      {"mlp", "mlp_fourier", "kan", "wavelet", "deeponet", "fno", "finite_difference",
       "finite_volume", "discontinuous_galerkin", "spectral"},
      {"strong_form", "weak_form", "hard_constraint", "conservative_form", "data_only"},
      {"adam", "lbfgs", "ssbroyden", "adam_then_lbfgs", "ssp_rk3", "rk4", "implicit_euler"});
}

std::string default_blueprint_dir() {
  if (const char* env = std::getenv("SCILOOP_ASSET_DIR")) return std::string(env) + "/blueprints";
  return std::string(SCILOOP_DEFAULT_ASSET_DIR) + "/blueprints";
}

void SessionConfig::validate() const {
  auto at_least_one = [](int v, const char* key) {
    if (v < 1) throw InvariantError(std::string("config key '") + key + "' must be at least 1");
  };
  at_least_one(max_iterations, "max_iterations");
  at_least_one(max_debug_rounds, "max_debug_rounds");
  at_least_one(strategy_max_rounds, "strategy_max_rounds");
  at_least_one(max_inspections, "max_inspections");
  at_least_one(max_patch_targets, "max_patch_targets");
  at_least_one(max_required_modules, "max_required_modules");
  if (!(reward_stop_threshold >= 0.0 && reward_stop_threshold <= bandit::kMaxReward)) {
    throw InvariantError("config key 'reward_stop_threshold' must lie in [0, 100]");
  }
  if (!(r_star >= 0.0 && r_star <= bandit::kMaxReward)) {
    throw InvariantError("config key 'r_star' must lie in [0, 100]");
  }
  if (!(similarity_floor >= 0.0 && similarity_floor <= 1.0)) {
    throw InvariantError("config key 'similarity_floor' must lie in [0, 1]");
  }
  if (!(gate_timeout_seconds > 0.0)) {
    throw InvariantError("config key 'gate_timeout_seconds' must be positive");
  }
  if (context_budget_tokens == 0 || history_budget_tokens == 0) {
    throw InvariantError("token budgets must be positive");
  }
  if (action_space.empty()) throw InvariantError("config key 'action_space' must not be empty");
  scoring.validate();
  runtime.validate();
}

SessionConfig SessionConfig::from_json(const Json& j, const std::string& base_dir) {
  static const std::set<std::string> known{
      "mode", "max_iterations", "max_debug_rounds", "reward_stop_threshold",
      "strategy_max_rounds", "max_inspections", "max_patch_targets", "max_required_modules",
      "action_space", "scoring", "runtime", "backends", "blueprint_dir", "store_dir", "log_dir",
      "context_budget_tokens", "history_budget_tokens", "recent_records_verbatim",
      "gate_timeout_seconds", "similarity_floor", "seed_templates", "seed_modules",
      "delimiter_pattern", "syntax_check", "deterministic", "r_star"};
  reject_unknown(j, known, "");
  SessionConfig c;
  try {
    if (j.contains("mode")) {
      const std::string m = require_string(j, "mode");
      if (m == "autonomous") c.mode = Mode::autonomous;
      else if (m == "interactive") c.mode = Mode::interactive;
      else throw InvariantError("config key 'mode' must be autonomous or interactive");
    }
    if (j.contains("max_iterations")) c.max_iterations = require_int(j, "max_iterations");
    if (j.contains("max_debug_rounds")) c.max_debug_rounds = require_int(j, "max_debug_rounds");
    if (j.contains("reward_stop_threshold")) {
      c.reward_stop_threshold = require_number(j, "reward_stop_threshold");
    }
    if (j.contains("strategy_max_rounds")) c.strategy_max_rounds = require_int(j, "strategy_max_rounds");
    if (j.contains("max_inspections")) c.max_inspections = require_int(j, "max_inspections");
    if (j.contains("max_patch_targets")) c.max_patch_targets = require_int(j, "max_patch_targets");
    if (j.contains("max_required_modules")) {
      c.max_required_modules = require_int(j, "max_required_modules");
    }
    if (j.contains("action_space")) {
      const Json& a = j["action_space"];
      reject_unknown(a, {"rep", "constraint", "opt"}, "action_space");
      c.action_space = bandit::ActionSpace(string_list(a, "rep"), string_list(a, "constraint"),
                                           string_list(a, "opt"));
    }
    if (j.contains("scoring")) c.scoring = reward::ScoringConfig::from_json(j["scoring"]);
    if (j.contains("runtime")) c.runtime = sandbox::RuntimeConfig::from_json(j["runtime"]);
    if (j.contains("backends") && !j["backends"].is_null()) {
      c.backends = llm::BackendTable::from_json(j["backends"]);
      c.backends_json = j["backends"];
    }
    if (j.contains("blueprint_dir")) c.blueprint_dir = require_string(j, "blueprint_dir");
    if (j.contains("store_dir")) c.store_dir = require_string(j, "store_dir");
    if (j.contains("log_dir")) c.log_dir = require_string(j, "log_dir");
    auto size_key = [&](const char* key, std::size_t& out) {
      if (!j.contains(key)) return;
      const int v = require_int(j, key);
      if (v < 0) throw InvariantError(std::string("config key '") + key + "' must not be negative");
      out = static_cast<std::size_t>(v);
    };
    size_key("context_budget_tokens", c.context_budget_tokens);
    size_key("history_budget_tokens", c.history_budget_tokens);
    size_key("recent_records_verbatim", c.recent_records_verbatim);
    if (j.contains("gate_timeout_seconds")) c.gate_timeout_seconds = require_number(j, "gate_timeout_seconds");
    if (j.contains("similarity_floor")) c.similarity_floor = require_number(j, "similarity_floor");
    if (j.contains("seed_templates")) {
      if (!j["seed_templates"].is_array()) throw InvariantError("config key 'seed_templates' must be an array");
      for (const auto& t : j["seed_templates"]) {
        reject_unknown(t, {"path", "metadata"}, "seed_templates[]");
        c.seed_templates.push_back({require_string(t, "path"),
                                    metadata_from(t.contains("metadata") ? t["metadata"] : Json(),
                                                  "seed_templates[].metadata")});
      }
    }
    if (j.contains("seed_modules")) {
      if (!j["seed_modules"].is_array()) throw InvariantError("config key 'seed_modules' must be an array");
      for (const auto& m : j["seed_modules"]) {
        reject_unknown(m, {"id", "path", "description", "dependencies"}, "seed_modules[]");
        SeedModule s;
        s.id = require_string(m, "id");
        s.path = require_string(m, "path");
        if (m.contains("description")) s.description = require_string(m, "description");
        s.dependencies = string_list(m, "dependencies");
        c.seed_modules.push_back(std::move(s));
      }
    }
    if (j.contains("delimiter_pattern")) c.delimiter_pattern = require_string(j, "delimiter_pattern");
    if (j.contains("syntax_check")) {
      const Json& s = j["syntax_check"];
      reject_unknown(s, {"command", "timeout_seconds"}, "syntax_check");
      c.syntax_check.command = string_list(s, "command");
      if (s.contains("timeout_seconds")) c.syntax_check.timeout_seconds = require_number(s, "timeout_seconds");
    }
    if (j.contains("deterministic")) {
      if (!j["deterministic"].is_boolean()) throw InvariantError("config key 'deterministic' must be a boolean");
      c.deterministic = j["deterministic"].get<bool>();
    }
    if (j.contains("r_star")) c.r_star = require_number(j, "r_star");
  } catch (const Json::exception& e) {
    throw InvariantError(std::string("config: ") + e.what());
  }
  c.blueprint_dir = resolve(base_dir, c.blueprint_dir);
  c.store_dir = resolve(base_dir, c.store_dir);
  c.log_dir = resolve(base_dir, c.log_dir);
  c.runtime.workdir_root = resolve(base_dir, c.runtime.workdir_root);
  for (auto& t : c.seed_templates) t.path = resolve(base_dir, t.path);
  for (auto& m : c.seed_modules) m.path = resolve(base_dir, m.path);
  c.validate();
  return c;
}

Json SessionConfig::to_json() const {
  Json seeds = Json::array();
  for (const auto& t : seed_templates) {
    Json meta = Json::object();
    for (const auto& [k, v] : t.metadata) meta[k] = v;
    seeds.push_back(Json{{"path", t.path}, {"metadata", meta}});
  }
  Json modules = Json::array();
  for (const auto& m : seed_modules) {
    modules.push_back(Json{{"id", m.id},
                           {"path", m.path},
                           {"description", m.description},
                           {"dependencies", m.dependencies}});
  }
  Json j{{"mode", to_string(mode)},
         {"max_iterations", max_iterations},
         {"max_debug_rounds", max_debug_rounds},
         {"reward_stop_threshold", reward_stop_threshold},
         {"strategy_max_rounds", strategy_max_rounds},
         {"max_inspections", max_inspections},
         {"max_patch_targets", max_patch_targets},
         {"max_required_modules", max_required_modules},
         {"action_space",
          {{"rep", action_space.rep_options()},
           {"constraint", action_space.constraint_options()},
           {"opt", action_space.opt_options()}}},
         {"scoring", scoring.to_json()},
         {"runtime", runtime.to_json()},
         {"blueprint_dir", blueprint_dir},
         {"store_dir", store_dir},
         {"log_dir", log_dir},
         {"context_budget_tokens", context_budget_tokens},
         {"history_budget_tokens", history_budget_tokens},
         {"recent_records_verbatim", recent_records_verbatim},
         {"gate_timeout_seconds", gate_timeout_seconds},
         {"similarity_floor", similarity_floor},
         {"seed_templates", seeds},
         {"seed_modules", modules},
         {"delimiter_pattern", delimiter_pattern},
         {"syntax_check",
          {{"command", syntax_check.command}, {"timeout_seconds", syntax_check.timeout_seconds}}},
         {"deterministic", deterministic},
         {"r_star", r_star}};
  if (backends) j["backends"] = backends_json;
  return j;
}

Json merge_config(Json base, const Json& overrides) {
  if (!overrides.is_object()) return overrides;
  if (!base.is_object()) base = Json::object();
  for (const auto& [k, v] : overrides.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object()) {
      base[k] = merge_config(base[k], v);
    } else {
      base[k] = v;
    }
  }
  return base;
}

std::string derive_session_id(const std::string& request, const SessionConfig& config) {
  // Paths are left out so the same request and settings give the same id in
  // any working directory.
  Json digest = config.to_json();
  for (const char* key : {"blueprint_dir", "store_dir", "log_dir", "seed_templates", "seed_modules"}) {
    digest.erase(key);
  }
  digest["runtime"].erase("workdir_root");
  return "s-" + sha256_hex(request + "\n" + digest.dump()).substr(0, 12);
}

long long call_budget_bound(const SessionConfig& c, int steps) {
  const long long R = c.strategy_max_rounds;
  const long long I = c.max_inspections;
  const long long T = c.max_patch_targets;
  const long long D = c.max_debug_rounds;
  const long long M = c.max_required_modules;
  const long long N = c.max_iterations;
  const long long session_start = 2 + 2 + 2;        // coordinator, gatekeeper, filing
  const long long implement_round = 1 + 2 + 2 * T + 2;  // planner, parser, patches, inspector
  const long long debug_round = 2 + 1 + 2 + 2 * T;      // debugger, then a repair plan
  const long long per_iteration = 1                      // summarizer
                                  + R * 4                // strategist and critic
                                  + 5 * 2                // validator over every candidate
                                  + M * 4                // librarian with one repair round
                                  + I * implement_round + D * debug_round
                                  + 1 + 2;               // advisor, advisor parser
  const long long per_step = N * per_iteration + 2 + 2;  // analyzer, splitter
  return session_start + static_cast<long long>(steps) * per_step;
}

}  // namespace sciloop::hena
