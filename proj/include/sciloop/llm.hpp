#pragma once

// Provider-agnostic, role-typed chat exchanges. Every agent role talks to a
// Backend; tests use MockBackend, which replays scripted replies keyed by
// (role, per-role sequence number).

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sciloop/common.hpp"
#include "sciloop/json_io.hpp"

namespace sciloop::llm {

struct Message {
  std::string speaker;  // "user" or "assistant"
  std::string text;
  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string role_id;
  std::string system_prompt;
  std::vector<Message> messages;
  std::vector<std::string> attachments;  // image paths
  std::optional<std::string> response_schema;
  int budget = 4096;  // max output tokens

  /// Throws InvariantError when the system prompt is empty.
  void validate() const;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  std::string model_id;
  std::chrono::milliseconds latency{0};
  int attempts = 1;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

class RateLimitedError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ProviderError : public BackendError {
 public:
  ProviderError(int status, const std::string& message)
      : BackendError(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Attachments sent to a text-only role, or embeddings from a backend without them.
class CapabilityError : public BackendError {
 public:
  using BackendError::BackendError;
};

class MissingFixtureError : public BackendError {
 public:
  MissingFixtureError(std::string role, int seq);
  const std::string& role() const { return role_; }
  int seq() const { return seq_; }

 private:
  std::string role_;
  int seq_;
};

class FixtureParseError : public Error {
 public:
  FixtureParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  /// Text embedding; the default implementation has none.
  virtual std::vector<double> embed(std::string_view text);
  virtual bool supports_images(std::string_view role_id) const;
};

/// Deterministic feature-hashing bag-of-words embedding (unit length).
std::vector<double> hashing_embedding(std::string_view text, std::size_t dim = 256);
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct RecordedCall {
  std::string role;
  int seq = 0;
  ChatRequest request;
};

class MockBackend final : public Backend {
 public:
  MockBackend() = default;

  /// Appends a reply for the next unused sequence number of `role`.
  void add(const std::string& role, std::string text);
  /// Throws InvariantError on a duplicate (role, seq).
  void set(const std::string& role, int seq, std::string text);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<double> embed(std::string_view text) override;
  bool supports_images(std::string_view role_id) const override;

  void set_embeddings_enabled(bool enabled);
  void set_image_roles(std::set<std::string> roles);
  /// Every call for this role fails with a 503 ProviderError.
  void fail_role(const std::string& role);

  std::vector<RecordedCall> calls() const;
  std::size_t call_count() const;
  std::size_t call_count(const std::string& role) const;
  /// Scripted entries not yet consumed, as "role#seq".
  std::vector<std::string> unconsumed() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, int>, std::string> entries_;
  std::map<std::string, int> next_add_;
  std::map<std::string, int> counters_;
  std::vector<RecordedCall> calls_;
  std::set<std::string> image_roles_;
  std::set<std::string> failing_roles_;
  bool embeddings_enabled_ = true;
};

/// Parses a JSONL transcript of {"role", "seq", "text"} objects.
/// Throws FixtureParseError carrying the 1-based line number.
std::unique_ptr<MockBackend> load_fixture(const std::string& path);

class SchemaError : public Error {
 public:
  SchemaError(std::string role, std::string raw_text, const std::string& reason, int attempts);
  const std::string& role() const { return role_; }
  const std::string& raw_text() const { return raw_; }
  int attempts() const { return attempts_; }

 private:
  std::string role_;
  std::string raw_;
  int attempts_;
};

/// Calls the backend and converts the reply with `parse`. A reply that is not
/// JSON, or that `parse` rejects with an InvariantError, is re-asked with the
/// rejection reason appended, up to `max_attempts` total calls. Backend
/// failures propagate unchanged.
template <class T>
T ask_structured(Backend& backend, ChatRequest request,
                 const std::function<T(const Json&)>& parse, int max_attempts = 2) {
  std::string last_raw;
  std::string last_reason;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    ChatResponse reply = backend.complete(request);
    last_raw = reply.text;
    try {
      return parse(parse_embedded_json(reply.text));
    } catch (const Json::exception& e) {
      last_reason = std::string("reply is not valid JSON: ") + e.what();
    } catch (const InvariantError& e) {
      last_reason = e.what();
    }
    request.messages.push_back({"assistant", reply.text});
    request.messages.push_back(
        {"user", "Your previous reply was rejected: " + last_reason +
                     ". Reply again with only the corrected JSON object."});
  }
  throw SchemaError(request.role_id, last_raw, last_reason, max_attempts);
}

}  // namespace sciloop::llm
