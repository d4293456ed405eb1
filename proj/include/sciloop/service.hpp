#pragma once

// HTTP surface over running sessions.
//
//   POST /sessions                               create (201, 400, 503)
//   GET  /sessions/{id}                          state snapshot
//   GET  /sessions/{id}/events?from=N            server-sent events, replay then live tail
//   POST /sessions/{id}/interventions            gate answers and directives (404, 409)
//   GET  /sessions/{id}/trials                   registered trial records
//   GET  /sessions/{id}/artifacts/{iter}/{name}  artifact bytes with X-Content-SHA256

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "sciloop/hena.hpp"

namespace httplib {
class Server;
}

namespace sciloop::service {

class RequestError : public Error {
 public:
  RequestError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Builds the backend for a new session from its config and the raw body.
using BackendFactory =
    std::function<std::unique_ptr<llm::Backend>(const hena::SessionConfig&, const Json& body)>;

/// Fixture transcript when the body names one, otherwise the configured HTTP
/// backend; 400 when neither is available.
std::unique_ptr<llm::Backend> default_backend_factory(const hena::SessionConfig& config,
                                                      const Json& body);

struct ServiceOptions {
  Json base_config = Json::object();  // overlaid by each request's "config"
  std::string base_dir;               // resolves relative config paths
  std::size_t max_sessions = 4;       // concurrently running
  BackendFactory backend_factory = default_backend_factory;
};

class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options);
  ~SessionManager();

  /// Body: {"request": text, "config": {...}, "fixture": path}. Starts the
  /// session on its own thread and returns its id.
  std::string create(const Json& body);

  /// Null when unknown.
  hena::Session* find(const std::string& id);

  std::size_t running() const;
  /// Blocks until the session is terminal.
  void join(const std::string& id);

 private:
  struct Entry {
    std::unique_ptr<llm::Backend> backend;
    std::unique_ptr<Clock> clock;
    std::unique_ptr<hena::Session> session;
    std::thread worker;
  };

  ServiceOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

/// Resolves an artifact request to a file inside the project directory.
/// Throws RequestError(400) on traversal and RequestError(404) when absent.
std::string resolve_artifact(const std::string& project_dir, const std::string& iteration,
                             const std::string& name);

/// One server-sent event frame.
std::string sse_frame(const events::Event& e);

class Server {
 public:
  explicit Server(SessionManager& manager);
  ~Server();

  /// Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  void routes();
  SessionManager& manager_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace sciloop::service
