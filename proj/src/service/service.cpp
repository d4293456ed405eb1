#include "sciloop/service.hpp"

#include <httplib.h>

#include <filesystem>

#include "sciloop/http_backend.hpp"
#include "sciloop/sandbox.hpp"

namespace fs = std::filesystem;

namespace sciloop::service {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, Json{{"error", message}});
}

std::string content_type_for(const std::string& name) {
  const std::string ext = to_lower(fs::path(name).extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".json") return "application/json";
  if (ext == ".csv") return "text/csv";
  if (ext == ".log" || ext == ".txt" || ext == ".src") return "text/plain";
  return "application/octet-stream";
}

}  // namespace

std::unique_ptr<llm::Backend> default_backend_factory(const hena::SessionConfig& config,
                                                      const Json& body) {
  if (body.contains("fixture") && body["fixture"].is_string()) {
    try {
      return llm::load_fixture(body["fixture"].get<std::string>());
    } catch (const std::exception& e) {
      throw RequestError(400, std::string("fixture: ") + e.what());
    }
  }
  if (config.backends) {
    return std::make_unique<llm::HttpBackend>(*config.backends, llm::RetryPolicy{});
  }
  throw RequestError(400, "no backend configured: set config.backends or name a fixture");
}

SessionManager::SessionManager(ServiceOptions options) : options_(std::move(options)) {}

SessionManager::~SessionManager() {
  std::map<std::string, std::unique_ptr<Entry>> all;
  {
    std::lock_guard<std::mutex> lock(mu_);
    all.swap(sessions_);
  }
  for (auto& [id, e] : all) {
    try {
      e->session->intervene({"abort", ""});
    } catch (const std::exception&) {
    }
    if (e->worker.joinable()) e->worker.join();
  }
}

std::size_t SessionManager::running() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto& [id, e] : sessions_) {
    if (!hena::is_terminal(e->session->snapshot().status)) ++n;
  }
  return n;
}

std::string SessionManager::create(const Json& body) {
  if (!body.is_object()) throw RequestError(400, "body must be a JSON object");
  for (const auto& [k, v] : body.items()) {
    if (k != "request" && k != "config" && k != "fixture") {
      throw RequestError(400, "unknown body key '" + k + "'");
    }
  }
  if (!body.contains("request") || !body["request"].is_string() ||
      trim(body["request"].get<std::string>()).empty()) {
    throw RequestError(400, "body needs a non-empty 'request' string");
  }
  const std::string request = body["request"].get<std::string>();
  hena::SessionConfig config;
  try {
    const Json merged = hena::merge_config(options_.base_config,
                                           body.contains("config") ? body["config"] : Json::object());
    config = hena::SessionConfig::from_json(merged, options_.base_dir);
  } catch (const InvariantError& e) {
    throw RequestError(400, e.what());
  }
  if (running() >= options_.max_sessions) {
    throw RequestError(503, "session capacity reached (" + std::to_string(options_.max_sessions) + ")");
  }
  auto entry = std::make_unique<Entry>();
  entry->backend = options_.backend_factory(config, body);
  if (config.deterministic) {
    entry->clock = std::make_unique<SteppingClock>();
  } else {
    entry->clock = std::make_unique<SystemClock>();
  }

  std::lock_guard<std::mutex> lock(mu_);
  std::string id = hena::derive_session_id(request, config);
  for (int k = 2; sessions_.count(id); ++k) {
    id = hena::derive_session_id(request, config) + "-" + std::to_string(k);
  }
  entry->session = std::make_unique<hena::Session>(config, request, *entry->backend, *entry->clock, id);
  hena::Session* s = entry->session.get();
  entry->worker = std::thread([s] { s->run(); });
  sessions_.emplace(id, std::move(entry));
  return id;
}

hena::Session* SessionManager::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second->session.get();
}

void SessionManager::join(const std::string& id) {
  hena::Session* s = find(id);
  if (!s) throw RequestError(404, "unknown session '" + id + "'");
  auto& log = s->event_log();
  while (!log.closed()) log.wait(log.next_seq(), std::chrono::milliseconds(200));
}

std::string resolve_artifact(const std::string& project_dir, const std::string& iteration,
                             const std::string& name) {
  if (project_dir.empty()) throw RequestError(404, "session has no project directory yet");
  std::string version = iteration;
  if (!version.empty() && std::all_of(version.begin(), version.end(), ::isdigit)) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "v%03d", std::stoi(version));
    version = buf;
  }
  const bool version_ok = version.size() >= 2 && version[0] == 'v' &&
                          std::all_of(version.begin() + 1, version.end(), ::isdigit);
  if (!version_ok) throw RequestError(400, "iteration must look like v001 or 1");
  if (name.empty() || fs::path(name).is_absolute()) throw RequestError(400, "invalid artifact name");
  for (const auto& part : fs::path(name)) {
    if (part == "..") throw RequestError(400, "path traversal rejected");
  }
  const fs::path dir = fs::path(project_dir) / version;
  const fs::path file = dir / name;
  if (!sandbox::is_contained(project_dir, file.string())) throw RequestError(400, "path traversal rejected");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw RequestError(404, "unknown iteration '" + iteration + "'");
  if (!fs::is_regular_file(file, ec)) throw RequestError(404, "unknown artifact '" + name + "'");
  // Symlinks must not lead out of the project either.
  const fs::path real = fs::canonical(file, ec);
  if (ec || !sandbox::is_contained(fs::canonical(project_dir).string(), real.string())) {
    throw RequestError(400, "path traversal rejected");
  }
  return real.string();
}

std::string sse_frame(const events::Event& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.kind + "\ndata: " + e.to_json().dump() +
         "\n\n";
}

Server::Server(SessionManager& manager) : manager_(manager), http_(std::make_unique<httplib::Server>()) {
  routes();
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  if (!http_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
  if (http_) http_->stop();
}

void Server::routes() {
  auto& s = *http_;
  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const RequestError& e) {
        send_error(res, e.status(), e.what());
      } catch (const hena::GateError& e) {
        send_error(res, e.status(), e.what());
      } catch (const Json::exception& e) {
        send_error(res, 400, std::string("invalid JSON: ") + e.what());
      } catch (const InvariantError& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };
  auto session_or_404 = [this](const std::string& id) {
    hena::Session* sess = manager_.find(id);
    if (!sess) throw RequestError(404, "unknown session '" + id + "'");
    return sess;
  };

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string id = manager_.create(Json::parse(req.body));
           res.set_header("Location", "/sessions/" + id);
           send_json(res, 201, Json{{"session_id", id}});
         }));

  s.Get(R"(/sessions/([^/]+))", guarded([session_or_404](const httplib::Request& req, httplib::Response& res) {
          hena::Session* sess = session_or_404(req.matches[1]);
          Json j = sess->snapshot().to_json();
          const auto gate = sess->waiting_gate();
          j["waiting_gate"] = gate ? Json(*gate) : Json(nullptr);
          j["next_seq"] = sess->event_log().next_seq();
          send_json(res, 200, j);
        }));

  s.Get(R"(/sessions/([^/]+)/trials)",
        guarded([session_or_404](const httplib::Request& req, httplib::Response& res) {
          hena::Session* sess = session_or_404(req.matches[1]);
          const auto state = sess->snapshot();
          Json arr = Json::array();
          for (const auto& r : state.history.records()) arr.push_back(explog::record_to_json(r, state.session_id));
          send_json(res, 200, arr);
        }));

  s.Post(R"(/sessions/([^/]+)/interventions)",
         guarded([session_or_404](const httplib::Request& req, httplib::Response& res) {
           hena::Session* sess = session_or_404(req.matches[1]);
           const Json body = Json::parse(req.body);
           hena::Intervention iv;
           iv.gate = require_string(body, "gate");
           if (body.contains("directive") && body["directive"].is_string()) {
             iv.directive = body["directive"].get<std::string>();
           }
           send_json(res, 200, sess->intervene(iv).to_json());
         }));

  s.Get(R"(/sessions/([^/]+)/artifacts/([^/]+)/(.+))",
        guarded([session_or_404](const httplib::Request& req, httplib::Response& res) {
          hena::Session* sess = session_or_404(req.matches[1]);
          const std::string path = resolve_artifact(sess->project_dir(), req.matches[2], req.matches[3]);
          const std::string bytes = read_file(path);
          res.set_header("X-Content-SHA256", sha256_hex(bytes));
          res.status = 200;
          res.set_content(bytes, content_type_for(path));
        }));

  s.Get(R"(/sessions/([^/]+)/events)",
        guarded([session_or_404](const httplib::Request& req, httplib::Response& res) {
          hena::Session* sess = session_or_404(req.matches[1]);
          long long from = 0;
          if (req.has_param("from")) {
            try {
              from = std::stoll(req.get_param_value("from"));
            } catch (const std::exception&) {
              throw RequestError(400, "from must be an integer");
            }
          } else if (req.has_header("Last-Event-ID")) {
            try {
              from = std::stoll(req.get_header_value("Last-Event-ID")) + 1;
            } catch (const std::exception&) {
              throw RequestError(400, "Last-Event-ID must be an integer");
            }
          }
          if (from < 0) throw RequestError(400, "from must not be negative");
          events::EventLog* log = &sess->event_log();
          auto next = std::make_shared<long long>(from);
          res.set_header("Cache-Control", "no-cache");
          res.set_chunked_content_provider(
              "text/event-stream", [log, next](std::size_t, httplib::DataSink& sink) {
                for (const auto& e : log->from(*next)) {
                  const std::string frame = sse_frame(e);
                  if (!sink.is_writable() || !sink.write(frame.data(), frame.size())) return false;
                  *next = e.seq + 1;
                }
                if (log->closed() && *next >= log->next_seq()) {
                  sink.done();
                  return true;
                }
                log->wait(*next, std::chrono::milliseconds(250));
                return true;
              });
        }));
}

}  // namespace sciloop::service
