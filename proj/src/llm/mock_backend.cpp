#include <cmath>
#include <fstream>

#include "sciloop/llm.hpp"

namespace sciloop::llm {

void ChatRequest::validate() const {
  if (trim(system_prompt).empty()) {
    throw InvariantError("chat request for role '" + role_id + "' has an empty system prompt");
  }
  if (role_id.empty()) throw InvariantError("chat request has no role");
}

MissingFixtureError::MissingFixtureError(std::string role, int seq)
    : BackendError("no scripted reply for role '" + role + "' seq " + std::to_string(seq)),
      role_(std::move(role)),
      seq_(seq) {}

FixtureParseError::FixtureParseError(std::size_t line, const std::string& message)
    : Error("fixture line " + std::to_string(line) + ": " + message), line_(line) {}

SchemaError::SchemaError(std::string role, std::string raw_text, const std::string& reason,
                         int attempts)
    : Error("role '" + role + "' produced no valid structured reply after " +
            std::to_string(attempts) + " attempt(s): " + reason),
      role_(std::move(role)),
      raw_(std::move(raw_text)),
      attempts_(attempts) {}

std::vector<double> Backend::embed(std::string_view) {
  throw CapabilityError("backend has no embedding endpoint");
}

bool Backend::supports_images(std::string_view) const { return false; }

std::vector<double> hashing_embedding(std::string_view text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  const auto words = tokenize_words(text);
  for (const auto& w : words) {
    // FNV-style mixing keeps buckets stable across standard libraries.
    std::uint64_t x = 1469598103934665603ull;
    for (unsigned char c : w) {
      x ^= c;
      x *= 1099511628211ull;
    }
    v[x % dim] += 1.0;
  }
  double norm = 0.0;
  for (double d : v) norm += d * d;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& d : v) d /= norm;
  }
  return v;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void MockBackend::add(const std::string& role, std::string text) {
  std::lock_guard lock(mu_);
  int seq = ++next_add_[role];
  while (entries_.count({role, seq})) seq = ++next_add_[role];
  entries_[{role, seq}] = std::move(text);
}

void MockBackend::set(const std::string& role, int seq, std::string text) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(std::make_pair(role, seq), std::move(text)).second) {
    throw InvariantError("duplicate fixture key (" + role + ", " + std::to_string(seq) + ")");
  }
  next_add_[role] = std::max(next_add_[role], seq);
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  request.validate();
  std::lock_guard lock(mu_);
  if (!request.attachments.empty() && !image_roles_.count(request.role_id)) {
    throw CapabilityError("role '" + request.role_id + "' does not accept image attachments");
  }
  const int seq = ++counters_[request.role_id];
  calls_.push_back({request.role_id, seq, request});
  if (failing_roles_.count(request.role_id)) {
    throw ProviderError(503, "scripted failure for role '" + request.role_id + "'");
  }
  auto it = entries_.find({request.role_id, seq});
  if (it == entries_.end()) throw MissingFixtureError(request.role_id, seq);
  ChatResponse resp;
  resp.text = it->second;
  resp.model_id = "mock";
  resp.usage.prompt_tokens = static_cast<int>(estimate_tokens(request.system_prompt));
  resp.usage.completion_tokens = static_cast<int>(estimate_tokens(resp.text));
  return resp;
}

std::vector<double> MockBackend::embed(std::string_view text) {
  {
    std::lock_guard lock(mu_);
    if (!embeddings_enabled_) throw CapabilityError("mock embeddings disabled");
  }
  return hashing_embedding(text);
}

bool MockBackend::supports_images(std::string_view role_id) const {
  std::lock_guard lock(mu_);
  return image_roles_.count(std::string(role_id)) > 0;
}

void MockBackend::set_embeddings_enabled(bool enabled) {
  std::lock_guard lock(mu_);
  embeddings_enabled_ = enabled;
}

void MockBackend::set_image_roles(std::set<std::string> roles) {
  std::lock_guard lock(mu_);
  image_roles_ = std::move(roles);
}

void MockBackend::fail_role(const std::string& role) {
  std::lock_guard lock(mu_);
  failing_roles_.insert(role);
}

std::vector<RecordedCall> MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

std::size_t MockBackend::call_count(const std::string& role) const {
  std::lock_guard lock(mu_);
  auto it = counters_.find(role);
  return it == counters_.end() ? 0 : static_cast<std::size_t>(it->second);
}

std::vector<std::string> MockBackend::unconsumed() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [key, text] : entries_) {
    auto it = counters_.find(key.first);
    const int used = it == counters_.end() ? 0 : it->second;
    if (key.second > used) out.push_back(key.first + "#" + std::to_string(key.second));
  }
  return out;
}

std::unique_ptr<MockBackend> load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fixture: " + path);
  auto backend = std::make_unique<MockBackend>();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FixtureParseError(lineno, "not a JSON object");
    if (!j.contains("role") || !j["role"].is_string()) {
      throw FixtureParseError(lineno, "missing string 'role'");
    }
    if (!j.contains("seq") || !j["seq"].is_number_integer() || j["seq"].get<int>() < 1) {
      throw FixtureParseError(lineno, "missing positive integer 'seq'");
    }
    if (!j.contains("text") || !j["text"].is_string()) {
      throw FixtureParseError(lineno, "missing string 'text'");
    }
    try {
      backend->set(j["role"].get<std::string>(), j["seq"].get<int>(),
                   j["text"].get<std::string>());
    } catch (const InvariantError& e) {
      throw FixtureParseError(lineno, e.what());
    }
  }
  return backend;
}

}  // namespace sciloop::llm
