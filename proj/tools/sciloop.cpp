// Command-line front end: run a session, replay or score a trial log, serve the API.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

#include "sciloop/experiment_log.hpp"
#include "sciloop/hena.hpp"
#include "sciloop/scaffolding.hpp"
#include "sciloop/service.hpp"

namespace fs = std::filesystem;
using namespace sciloop;

namespace {

hena::SessionConfig load_config(const std::string& path, Json overrides = Json::object()) {
  Json j = Json::object();
  std::string base_dir = fs::current_path().string();
  if (!path.empty()) {
    j = Json::parse(read_file(path));
    base_dir = fs::absolute(path).parent_path().string();
  }
  return hena::SessionConfig::from_json(hena::merge_config(j, overrides), base_dir);
}

void print_event(const events::Event& e) {
  const Json& p = e.payload;
  if (e.kind == "session_started") {
    std::cout << "project " << p["project"].get<std::string>() << ", route:";
    for (const auto& s : p["routing"]["steps"]) std::cout << " " << s["group"].get<std::string>();
    std::cout << "\n";
  } else if (e.kind == "step_started") {
    std::cout << "step " << p["step"] << " (" << p["group"].get<std::string>() << ")\n";
  } else if (e.kind == "debug_round") {
    std::cout << "  iteration " << p["iteration"] << " debug round " << p["round"] << ": "
              << p["report"]["error_class"].get<std::string>() << "\n";
  } else if (e.kind == "trial_registered") {
    const Json& r = p["record"];
    std::cout << "  iteration " << r["iteration"] << " " << r["action"]["rep"].get<std::string>() << "/"
              << r["action"]["constraint"].get<std::string>() << "/"
              << r["action"]["opt"].get<std::string>() << " reward " << r["reward"]["total"]
              << " verdict " << r["diagnosis"]["verdict"].get<std::string>() << "\n";
  } else if (e.kind == "terminal") {
    std::cout << "terminal: " << p["status"].get<std::string>() << " (" << p["reason"].get<std::string>()
              << ")\n";
  }
}

int run_command(const std::string& request_file, const std::string& config_path,
                const std::string& fixture, bool interactive, bool quiet) {
  Json overrides = Json::object();
  if (interactive) overrides["mode"] = "interactive";
  hena::SessionConfig config = load_config(config_path, overrides);
  const std::string request = read_file(request_file);

  std::unique_ptr<llm::Backend> backend;
  if (!fixture.empty()) {
    backend = llm::load_fixture(fixture);
  } else if (config.backends) {
    backend = std::make_unique<llm::HttpBackend>(*config.backends, llm::RetryPolicy{});
  } else {
    std::cerr << "no backend: pass --fixture or configure 'backends'\n";
    return 64;
  }
  std::unique_ptr<Clock> clock;
  if (config.deterministic) clock = std::make_unique<SteppingClock>();
  else clock = std::make_unique<SystemClock>();

  hena::Session session(config, request, *backend, *clock);
  std::cout << "session " << session.id() << "\n";
  std::thread worker([&] { session.run(); });

  auto& log = session.event_log();
  long long next = 0;
  while (true) {
    log.wait(next, std::chrono::milliseconds(200));
    for (const auto& e : log.from(next)) {
      next = e.seq + 1;
      if (!quiet) print_event(e);
      if (e.kind == "gate_waiting" && config.mode == hena::Mode::interactive) {
        const std::string gate = e.payload["gate"].get<std::string>();
        std::cout << "gate " << gate << ":\n" << e.payload["payload"].dump(2) << "\n"
                  << "directive (empty line approves, 'abort' stops): " << std::flush;
        std::string line;
        std::getline(std::cin, line);
        try {
          if (trim(line) == "abort") session.intervene({"abort", ""});
          else session.intervene({gate, line});
        } catch (const hena::GateError& err) {
          std::cerr << "intervention rejected: " << err.what() << "\n";
        }
      }
    }
    if (log.closed() && next >= log.next_seq()) break;
  }
  worker.join();
  const auto state = session.snapshot();
  std::cout << "trials: " << session.trials_path() << "\nevents: " << session.events_path() << "\n";
  switch (state.status) {
    case hena::Status::succeeded: return 0;
    case hena::Status::exhausted: return 2;
    default: return 3;
  }
}

int replay_command(const std::string& path, bool partial) {
  const auto result = explog::replay(path, partial);
  std::cout << "session " << result.history.session_id() << ", " << result.history.size() << " trials\n";
  for (const auto& r : result.history.records()) std::cout << scaffolding::history_row(r) << "\n";
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int regret_command(const std::string& path, double r_star, bool json) {
  const auto rep = explog::report(path, r_star);
  if (json) std::cout << rep.to_json().dump(2) << "\n";
  else std::cout << explog::format_report(rep);
  return 0;
}

std::atomic<service::Server*> g_server{nullptr};

int serve_command(const std::string& host, int port, const std::string& config_path,
                  std::size_t max_sessions) {
  service::ServiceOptions opts;
  if (!config_path.empty()) {
    opts.base_config = Json::parse(read_file(config_path));
    opts.base_dir = fs::absolute(config_path).parent_path().string();
  } else {
    opts.base_dir = fs::current_path().string();
  }
  opts.max_sessions = max_sessions;
  service::SessionManager manager(opts);
  service::Server server(manager);
  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << "\n" << std::flush;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sciloop: closed-loop agentic research sessions"};
  app.require_subcommand(1);

  std::string request_file, config_path, fixture;
  bool interactive = false, quiet = false;
  auto* run = app.add_subcommand("run", "Run a session to a terminal status");
  run->add_option("request-file", request_file, "Plain-text research request")->required()->check(CLI::ExistingFile);
  run->add_flag("--interactive", interactive, "Block at intervention gates and read directives from stdin");
  run->add_option("--config", config_path, "Session config (JSON)")->check(CLI::ExistingFile);
  run->add_option("--fixture", fixture, "Replay a JSONL transcript instead of live backends")
      ->check(CLI::ExistingFile);
  run->add_flag("--quiet", quiet, "Print only the final paths");

  std::string log_path;
  bool partial = false;
  auto* replay = app.add_subcommand("replay", "Rebuild the trial history from a log");
  replay->add_option("log", log_path, "trials.jsonl")->required()->check(CLI::ExistingFile);
  replay->add_flag("--partial", partial, "Stop at the first corrupt line instead of failing");

  double r_star = bandit::kMaxReward;
  bool json = false;
  auto* regret = app.add_subcommand("regret", "Rewards, deltas and regret of a log");
  regret->add_option("log", log_path, "trials.jsonl")->required()->check(CLI::ExistingFile);
  regret->add_option("--r-star", r_star, "Reference reward")->check(CLI::Range(0.0, 100.0));
  regret->add_flag("--json", json, "Machine-readable output");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_sessions = 4;
  auto* serve = app.add_subcommand("serve", "Serve the session API");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--config", config_path, "Base session config (JSON)")->check(CLI::ExistingFile);
  serve->add_option("--max-sessions", max_sessions, "Concurrently running sessions");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_command(request_file, config_path, fixture, interactive, quiet);
    if (*replay) return replay_command(log_path, partial);
    if (*regret) return regret_command(log_path, r_star, json);
    if (*serve) return serve_command(host, port, config_path, max_sessions);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
