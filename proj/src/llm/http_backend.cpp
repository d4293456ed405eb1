#include "sciloop/http_backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace sciloop::llm {

double default_temperature(std::string_view role_id) {
  return role_id == "strategist" ? 0.7 : 0.2;
}

namespace {

ProviderConfig provider_from_json(const std::string& name, const Json& j) {
  ProviderConfig p;
  p.name = name;
  for (const auto& [key, v] : j.items()) {
    if (key == "base_url") p.base_url = v.get<std::string>();
    else if (key == "api_key_env") p.api_key_env = v.get<std::string>();
    else if (key == "chat_path") p.chat_path = v.get<std::string>();
    else if (key == "embeddings_path") p.embeddings_path = v.get<std::string>();
    else if (key == "embedding_model") p.embedding_model = v.get<std::string>();
    else if (key == "max_in_flight") p.max_in_flight = v.get<int>();
    else if (key == "timeout_seconds") p.timeout_seconds = v.get<double>();
    else throw InvariantError("unknown config key 'backends.providers." + name + "." + key + "'");
  }
  if (p.base_url.empty()) throw InvariantError("provider '" + name + "' has no base_url");
  if (p.max_in_flight < 1) throw InvariantError("provider '" + name + "' max_in_flight < 1");
  return p;
}

RoleBinding binding_from_json(const std::string& role, const Json& j) {
  RoleBinding b;
  b.temperature = default_temperature(role);
  for (const auto& [key, v] : j.items()) {
    if (key == "provider") b.provider = v.get<std::string>();
    else if (key == "model") b.model = v.get<std::string>();
    else if (key == "temperature") b.temperature = v.get<double>();
    else if (key == "supports_images") b.supports_images = v.get<bool>();
    else throw InvariantError("unknown config key 'backends.roles." + role + "." + key + "'");
  }
  return b;
}

bool retryable_status(int status) { return status == 429 || status == 408 || status >= 500; }

}  // namespace

BackendTable BackendTable::from_json(const Json& j) {
  BackendTable t;
  for (const auto& [key, v] : j.items()) {
    if (key == "providers") {
      for (const auto& [name, pj] : v.items()) t.providers[name] = provider_from_json(name, pj);
    } else if (key == "roles") {
      for (const auto& [role, rj] : v.items()) t.roles[role] = binding_from_json(role, rj);
    } else if (key == "default_role") {
      t.default_role = v.get<std::string>();
    } else {
      throw InvariantError("unknown config key 'backends." + key + "'");
    }
  }
  for (const auto& [role, b] : t.roles) {
    if (!t.providers.count(b.provider)) {
      throw InvariantError("role '" + role + "' references unknown provider '" + b.provider + "'");
    }
  }
  return t;
}

const RoleBinding& BackendTable::binding_for(const std::string& role_id) const {
  auto it = roles.find(role_id);
  if (it != roles.end()) return it->second;
  if (!default_role.empty()) {
    auto d = roles.find(default_role);
    if (d != roles.end()) return d->second;
  }
  throw InvariantError("no backend binding for role '" + role_id + "'");
}

std::chrono::milliseconds RetryPolicy::delay_for(int failed_attempts) const {
  double d = static_cast<double>(base_delay.count());
  for (int i = 1; i < failed_attempts; ++i) d *= multiplier;
  return std::chrono::milliseconds(
      static_cast<long long>(std::min(d, static_cast<double>(max_delay.count()))));
}

ConcurrencyLimiter::ConcurrencyLimiter(int limit) : limit_(std::max(1, limit)) {}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
  high_water_ = std::max(high_water_, in_flight_);
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int ConcurrencyLimiter::high_water() const {
  std::lock_guard lock(mu_);
  return high_water_;
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttpReply post(const std::string& base_url, const std::string& path,
                 const std::map<std::string, std::string>& headers, const std::string& body,
                 double timeout_seconds) override {
    httplib::Client cli(base_url);
    const auto secs = static_cast<time_t>(timeout_seconds);
    const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(std::min<time_t>(secs, 10), usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    HttpReply reply;
    auto res = cli.Post(path, h, body, "application/json");
    if (!res) {
      reply.transport_failed = true;
      reply.timed_out = res.error() == httplib::Error::Read ||
                        res.error() == httplib::Error::ConnectionTimeout;
      reply.error = httplib::to_string(res.error());
      return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
    for (const auto& [k, v] : res->headers) reply.headers[to_lower(k)] = v;
    return reply;
  }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() {
  return std::make_shared<HttplibTransport>();
}

Json build_chat_body(const ChatRequest& request, const RoleBinding& binding) {
  Json body;
  body["model"] = binding.model;
  body["temperature"] = binding.temperature;
  body["max_tokens"] = request.budget;
  Json messages = Json::array();
  messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    const auto& m = request.messages[i];
    const bool last_user = m.speaker == "user" && i + 1 == request.messages.size();
    if (last_user && !request.attachments.empty()) {
      Json parts = Json::array();
      parts.push_back({{"type", "text"}, {"text", m.text}});
      for (const auto& path : request.attachments) {
        parts.push_back({{"type", "image_url"},
                         {"image_url",
                          {{"url", "data:image/png;base64," + base64_encode(read_file(path))}}}});
      }
      messages.push_back({{"role", "user"}, {"content", parts}});
    } else {
      messages.push_back({{"role", m.speaker}, {"content", m.text}});
    }
  }
  body["messages"] = std::move(messages);
  if (request.response_schema) body["response_format"] = {{"type", "json_object"}};
  return body;
}

ChatResponse parse_chat_reply(const std::string& body) {
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
      j["choices"].empty()) {
    throw ProviderError(200, "malformed chat completion body");
  }
  const Json& msg = j["choices"][0].value("message", Json::object());
  ChatResponse resp;
  if (msg.contains("content") && msg["content"].is_string()) {
    resp.text = msg["content"].get<std::string>();
  } else if (msg.contains("content") && msg["content"].is_array()) {
    for (const auto& part : msg["content"]) {
      if (part.contains("text") && part["text"].is_string()) resp.text += part["text"].get<std::string>();
    }
  }
  if (resp.text.empty()) throw ProviderError(200, "chat completion carried no text");
  resp.model_id = j.value("model", "");
  if (j.contains("usage") && j["usage"].is_object()) {
    resp.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    resp.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return resp;
}

HttpBackend::HttpBackend(BackendTable table, RetryPolicy retry,
                         std::shared_ptr<HttpTransport> transport)
    : table_(std::move(table)), retry_(retry), transport_(std::move(transport)) {
  for (const auto& [name, p] : table_.providers) {
    limiters_[name] = std::make_unique<ConcurrencyLimiter>(p.max_in_flight);
  }
}

ConcurrencyLimiter& HttpBackend::limiter_for(const std::string& provider) {
  std::lock_guard lock(mu_);
  auto& slot = limiters_[provider];
  if (!slot) slot = std::make_unique<ConcurrencyLimiter>(4);
  return *slot;
}

int HttpBackend::high_water(const std::string& provider) const {
  std::lock_guard lock(mu_);
  auto it = limiters_.find(provider);
  return it == limiters_.end() ? 0 : it->second->high_water();
}

HttpReply HttpBackend::post_with_retry(const ProviderConfig& provider, const std::string& path,
                                       const std::string& body, int& attempts) {
  std::map<std::string, std::string> headers;
  if (!provider.api_key_env.empty()) {
    if (const char* key = std::getenv(provider.api_key_env.c_str()); key && *key) {
      headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  auto& limiter = limiter_for(provider.name);
  HttpReply reply;
  for (attempts = 1;; ++attempts) {
    {
      ConcurrencyLimiter::Guard guard(limiter);
      reply = transport_->post(provider.base_url, path, headers, body, provider.timeout_seconds);
    }
    const bool ok = !reply.transport_failed && reply.status >= 200 && reply.status < 300;
    if (ok) return reply;
    const bool retryable = reply.transport_failed || retryable_status(reply.status);
    if (!retryable || attempts >= retry_.max_attempts) break;
    auto delay = retry_.delay_for(attempts);
    if (auto it = reply.headers.find("retry-after"); it != reply.headers.end()) {
      char* end = nullptr;
      const double secs = std::strtod(it->second.c_str(), &end);
      if (end != it->second.c_str() && secs >= 0) {
        delay = std::min(retry_.max_delay,
                         std::chrono::milliseconds(static_cast<long long>(secs * 1000)));
      }
    }
    std::this_thread::sleep_for(delay);
  }
  const std::string where = provider.name + " after " + std::to_string(attempts) + " attempt(s)";
  if (reply.transport_failed) {
    if (reply.timed_out) throw TimeoutError("request timed out: " + where);
    throw ProviderError(0, "transport failure (" + reply.error + "): " + where);
  }
  if (reply.status == 429) throw RateLimitedError("rate limited: " + where);
  throw ProviderError(reply.status, "provider returned HTTP " + std::to_string(reply.status) +
                                        ": " + where);
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  request.validate();
  const RoleBinding& binding = table_.binding_for(request.role_id);
  if (!request.attachments.empty() && !binding.supports_images) {
    throw CapabilityError("role '" + request.role_id + "' is bound to a text-only model");
  }
  const ProviderConfig& provider = table_.providers.at(binding.provider);
  const std::string body = build_chat_body(request, binding).dump();
  const auto start = std::chrono::steady_clock::now();
  int attempts = 0;
  HttpReply reply = post_with_retry(provider, provider.chat_path, body, attempts);
  ChatResponse resp = parse_chat_reply(reply.body);
  resp.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  resp.attempts = attempts;
  if (resp.model_id.empty()) resp.model_id = binding.model;
  return resp;
}

std::vector<double> HttpBackend::embed(std::string_view text) {
  const RoleBinding* binding = nullptr;
  try {
    binding = &table_.binding_for("embedding");
  } catch (const InvariantError&) {
    throw CapabilityError("no provider bound for embeddings");
  }
  const ProviderConfig& provider = table_.providers.at(binding->provider);
  Json body{{"model", provider.embedding_model.empty() ? binding->model : provider.embedding_model},
            {"input", std::string(text)}};
  int attempts = 0;
  HttpReply reply = post_with_retry(provider, provider.embeddings_path, body.dump(), attempts);
  Json j = Json::parse(reply.body, nullptr, false);
  if (j.is_discarded() || !j.contains("data") || !j["data"].is_array() || j["data"].empty() ||
      !j["data"][0].contains("embedding")) {
    throw ProviderError(reply.status, "malformed embeddings body");
  }
  return j["data"][0]["embedding"].get<std::vector<double>>();
}

bool HttpBackend::supports_images(std::string_view role_id) const {
  try {
    return table_.binding_for(std::string(role_id)).supports_images;
  } catch (const InvariantError&) {
    return false;
  }
}

}  // namespace sciloop::llm
