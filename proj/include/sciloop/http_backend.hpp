#pragma once

// Live backend over the common "chat completions" POST shape. Provider
// specifics live in the adapter; the transport is a seam so retry behaviour
// can be exercised against a local server or a scripted fake.

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "sciloop/json_io.hpp"
#include "sciloop/llm.hpp"

namespace sciloop::llm {

struct ProviderConfig {
  std::string name;
  std::string base_url;          // scheme://host[:port]
  std::string api_key_env;       // credential is read from this env var, never stored
  std::string chat_path = "/v1/chat/completions";
  std::string embeddings_path = "/v1/embeddings";
  std::string embedding_model;
  int max_in_flight = 4;
  double timeout_seconds = 120.0;
};

struct RoleBinding {
  std::string provider;
  std::string model;
  double temperature = 0.2;
  bool supports_images = false;
};

/// Default sampling temperature: exploratory for the strategist, low elsewhere.
double default_temperature(std::string_view role_id);

struct BackendTable {
  std::map<std::string, ProviderConfig> providers;
  std::map<std::string, RoleBinding> roles;
  std::string default_role;  // binding used for roles not listed, if set

  /// Parses the `backends` config section; unknown keys are rejected by name.
  static BackendTable from_json(const Json& j);
  const RoleBinding& binding_for(const std::string& role_id) const;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30000};

  std::chrono::milliseconds delay_for(int failed_attempts) const;
};

struct HttpReply {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;
  bool transport_failed = false;
  bool timed_out = false;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpReply post(const std::string& base_url, const std::string& path,
                         const std::map<std::string, std::string>& headers,
                         const std::string& body, double timeout_seconds) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

/// At most `limit` holders at once; also tracks the high-water mark.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit);
  void acquire();
  void release();
  int high_water() const;

  class Guard {
   public:
    explicit Guard(ConcurrencyLimiter& l) : l_(l) { l_.acquire(); }
    ~Guard() { l_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    ConcurrencyLimiter& l_;
  };

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
  int high_water_ = 0;
};

/// Request body for the chat completions convention.
Json build_chat_body(const ChatRequest& request, const RoleBinding& binding);
/// Extracts assistant text and usage; throws ProviderError on a malformed body.
ChatResponse parse_chat_reply(const std::string& body);

class HttpBackend final : public Backend {
 public:
  HttpBackend(BackendTable table, RetryPolicy retry,
              std::shared_ptr<HttpTransport> transport = make_http_transport());

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<double> embed(std::string_view text) override;
  bool supports_images(std::string_view role_id) const override;

  const BackendTable& table() const { return table_; }
  int high_water(const std::string& provider) const;

 private:
  HttpReply post_with_retry(const ProviderConfig& provider, const std::string& path,
                            const std::string& body, int& attempts);
  ConcurrencyLimiter& limiter_for(const std::string& provider);

  BackendTable table_;
  RetryPolicy retry_;
  std::shared_ptr<HttpTransport> transport_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<ConcurrencyLimiter>> limiters_;
};

}  // namespace sciloop::llm
